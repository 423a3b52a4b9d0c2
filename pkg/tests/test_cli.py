import csv
import json

import numpy as np
import pytest

from decision_lstm.cli import main
from decision_lstm.dataset import load_ipd, make_dataset, save_igt
from decision_lstm.evaluation import cooperation_rate
from decision_lstm.games import IGT, Trajectory


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def ipd_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("ipd")
    assert run("simulate", "--game", "ipd", "--mix", "tit_for_tat,grim_trigger,always_defect:0.2",
               "--n", 60, "--seed", 3, "--out", out) == 0
    return out / "ipd.csv"


@pytest.fixture(scope="module")
def igt_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("igt")
    assert run("simulate", "--game", "igt", "--scheme", 1, "--policy", "random", "--trials", 30,
               "--n", 20, "--seed", 1, "--out", out) == 0
    return out


# ---------------------------------------------------------------- simulate


def test_simulate_tft_vs_defector(tmp_path, capsys):
    code = run("simulate", "--game", "ipd", "--p1", "tit_for_tat", "--p2", "always_defect",
               "--rounds", 9, "--n", 100, "--seed", 7, "--out", tmp_path)
    assert code == 0
    ds = load_ipd(tmp_path / "ipd.csv")
    assert len(ds) == 100
    p2 = np.array([t.actions[1] for t in ds.trajectories])
    assert np.all(cooperation_rate(p2[:, 1:]) == 0)
    # tit-for-tat copies the defector from round 2 on
    p1 = np.array([t.actions[0] for t in ds.trajectories])
    assert np.all(cooperation_rate(p1[:, 1:]) == 0)


def test_simulate_igt_matrix(igt_data, tmp_path):
    assert run("simulate", "--game", "igt", "--scheme", 1, "--policy", "random", "--trials", 95,
               "--n", 50, "--seed", 1, "--out", tmp_path) == 0
    with open(tmp_path / "choices.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 51 and all(len(r) == 96 for r in rows)
    for name in ("wins.csv", "losses.csv", "manifest.json"):
        assert (tmp_path / name).exists()


def test_simulate_byte_identical(tmp_path):
    argv = ["simulate", "--game", "ipd", "--mix", "tit_for_tat,always_defect:0.2", "--n", 30, "--seed", 5]
    assert run(*argv, "--out", tmp_path / "a") == 0
    assert run(*argv, "--out", tmp_path / "b") == 0
    for name in ("ipd.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_invalid_spec(tmp_path, capsys):
    code = run("simulate", "--game", "ipd", "--R", 3, "--S", 0, "--T", 7, "--P", 1, "--out", tmp_path)
    assert code == 2
    assert "2R > T + S" in capsys.readouterr().err


def test_manifest_contents(tmp_path, ipd_data):
    assert run("train", "--game", "ipd", "--data", ipd_data, "--model", "var", "--seed", 2, "--out", tmp_path) == 0
    m = read_json(tmp_path / "manifest.json")
    assert m["seed"] == 2 and m["tool_version"]
    assert str(ipd_data) in m["input_hashes"]
    assert m["config"]["model"] == "var"


# ------------------------------------------------------------------- train


def test_train_var_has_no_epochs(tmp_path, ipd_data):
    assert run("train", "--game", "ipd", "--data", ipd_data, "--model", "var", "--out", tmp_path) == 0
    assert (tmp_path / "history.csv").read_text().strip().splitlines() == ["epoch,train_loss,val_loss"]
    assert read_json(tmp_path / "checkpoint.json")["kind"] == "var"


def test_train_lstm_records_dims(tmp_path, ipd_data):
    code = run("train", "--game", "ipd", "--data", ipd_data, "--model", "lstm", "--hidden", 10,
               "--layers", 2, "--epochs", 3, "--out", tmp_path)
    assert code == 0
    dims = read_json(tmp_path / "checkpoint.json")["dims"]
    assert dims["hidden"] == 10 and dims["layers"] == 2
    assert len((tmp_path / "history.csv").read_text().strip().splitlines()) == 4


def test_train_missing_file(tmp_path, capsys):
    code = run("train", "--game", "ipd", "--data", tmp_path / "nope.csv", "--model", "var", "--out", tmp_path)
    assert code == 3
    assert "nope.csv" in capsys.readouterr().err


def test_train_bad_data_row(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("subject,trial_1,trial_2\n1,A,Z\n")
    assert run("train", "--game", "igt", "--data", bad, "--model", "var", "--out", tmp_path / "o") == 3


# -------------------------------------------------------------------- eval


def test_eval_memorized_sequence(tmp_path):
    cycle = Trajectory(IGT, (tuple(int(k) for k in np.arange(95) % 4),), meta=(("id", "1"),))
    save_igt(make_dataset(IGT, [cycle]), tmp_path / "cycle.csv")
    ck = tmp_path / "model"
    assert run("train", "--game", "igt", "--data", tmp_path / "cycle.csv", "--model", "lstm", "--epochs", 500,
               "--val-fraction", 0, "--train-on", "all", "--out", ck) == 0
    assert run("eval", "--game", "igt", "--data", tmp_path / "cycle.csv", "--checkpoint", ck / "checkpoint.json",
               "--on", "all", "--out", tmp_path / "ev") == 0
    report = read_json(tmp_path / "ev" / "report.json")
    assert report["avg_mse"] < 1e-3
    assert (tmp_path / "ev" / "report_curve.csv").exists()


def test_eval_test_split_byte_identical(tmp_path, ipd_data):
    assert run("train", "--game", "ipd", "--data", ipd_data, "--model", "logistic", "--out", tmp_path / "m") == 0
    for d in ("a", "b"):
        assert run("eval", "--game", "ipd", "--data", ipd_data, "--checkpoint", tmp_path / "m" / "checkpoint.json",
                   "--out", tmp_path / d) == 0
    for name in ("report.json", "report_curve.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_folds(tmp_path, ipd_data):
    assert run("train", "--game", "ipd", "--data", ipd_data, "--model", "var", "--out", tmp_path / "m") == 0
    assert run("eval", "--game", "ipd", "--data", ipd_data, "--checkpoint", tmp_path / "m" / "checkpoint.json",
               "--folds", 5, "--out", tmp_path / "cv") == 0
    folds = [read_json(tmp_path / "cv" / f"fold_{k}.json") for k in range(1, 6)]
    agg = read_json(tmp_path / "cv" / "aggregate.json")
    assert agg["n_folds"] == 5
    assert agg["avg_mse"] == pytest.approx(np.mean([f["avg_mse"] for f in folds]), abs=1e-15)
    assert sum(f["n_test"] for f in folds) == 60


def test_eval_game_mismatch(tmp_path, igt_data, ipd_data, capsys):
    assert run("train", "--game", "igt", "--data", igt_data / "choices.csv", "--wins", igt_data / "wins.csv",
               "--losses", igt_data / "losses.csv", "--model", "var", "--out", tmp_path / "m") == 0
    code = run("eval", "--game", "ipd", "--data", ipd_data, "--checkpoint", tmp_path / "m" / "checkpoint.json",
               "--out", tmp_path / "ev")
    assert code == 3
    assert "igt" in capsys.readouterr().err


# --------------------------------------------------------------- gradcheck


def test_gradcheck_pass(capsys):
    assert run("gradcheck") == 0
    assert "max_rel_err < 0.0001: PASS" in capsys.readouterr().out


def test_gradcheck_corrupted_fails(capsys):
    assert run("gradcheck", "--corrupt") == 4
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_deterministic(capsys):
    run("gradcheck", "--seed", 4)
    first = capsys.readouterr().out
    run("gradcheck", "--seed", 4)
    assert capsys.readouterr().out == first


# ------------------------------------------------------------------ config


def test_config_file_supplies_and_flags_override(tmp_path, ipd_data):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# training run\ngame = ipd\ndata = {ipd_data}\nmodel = var\nlag = 2\nseed = 9\n")
    assert run("train", "--config", cfg, "--out", tmp_path / "a") == 0
    ck = read_json(tmp_path / "a" / "checkpoint.json")
    assert ck["lag"] == 2 and ck["seed"] == 9
    assert run("train", "--config", cfg, "--lag", 3, "--out", tmp_path / "b") == 0
    assert read_json(tmp_path / "b" / "checkpoint.json")["lag"] == 3


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("game = ipd\nbogus = 1\n")
    assert run("train", "--config", cfg, "--out", tmp_path) == 2
    assert run("train", "--config", tmp_path / "missing.cfg") == 2


def test_usage_error_exit_code():
    assert run("train", "--game", "ipd") == 2
