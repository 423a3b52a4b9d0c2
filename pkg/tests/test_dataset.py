import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from decision_lstm.dataset import (
    Dataset,
    FeatureConfig,
    load_igt,
    load_ipd,
    make_dataset,
    make_folds,
    pool_and_truncate,
    save_igt,
    save_ipd,
    split_train_test,
    supervised,
    to_supervised,
)
from decision_lstm.errors import ConfigError, DegenerateTrajectoryError, GapError, LengthError, ParseError
from decision_lstm.experiments import SYNTHETIC_IPD_MIX, simulate_igt_population, simulate_ipd_population
from decision_lstm.games import COOPERATE as C, DEFECT as D, IGT, IPD, SynthPolicy, Trajectory
from decision_lstm.evaluation import cooperation_rate


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return path


def igt_traj(actions, sid="s"):
    return Trajectory(IGT, (tuple(actions),), meta=(("id", sid),))


def ipd_rows(tid, pairs, payoffs=None):
    out = []
    for k, (a, b) in enumerate(pairs, start=1):
        out.append([tid, k, a, b] + (list(payoffs) if payoffs else []))
    return out


# ------------------------------------------------------------------ IGT


def test_load_constant_igt(tmp_path):
    path = write_rows(tmp_path / "c.csv", [[f"t{k}" for k in range(95)]] + [["3"] * 95] * 3)
    ds = load_igt(path)
    assert len(ds) == 3 and ds.horizon == 95 and ds.alphabet == 4
    assert all(t.actions[0] == (2,) * 95 for t in ds.trajectories)


def test_load_igt_bad_cell_reports_position(tmp_path):
    rows = [[f"t{k}" for k in range(10)], ["1"] * 10, ["1"] * 6 + ["5"] + ["1"] * 3]
    with pytest.raises(ParseError, match="row 2, col 7"):
        load_igt(write_rows(tmp_path / "c.csv", rows))


def test_load_igt_published_layout_with_row_names(tmp_path):
    # R write.csv: header lacks the row-name column
    choices = [["Choice_1", "Choice_2", "Choice_3"], ["Subj_1", "1", "2", "4"], ["Subj_2", "3", "3", "3"]]
    wins = [["Wins_1", "Wins_2", "Wins_3"], ["Subj_1", "100", "100", "50"], ["Subj_2", "50", "50", "50"]]
    losses = [["Losses_1", "Losses_2", "Losses_3"], ["Subj_1", "0", "-1250", "0"], ["Subj_2", "-50", "0", "-25"]]
    ds = load_igt(
        write_rows(tmp_path / "choice_3.csv", choices),
        write_rows(tmp_path / "wi_3.csv", wins),
        write_rows(tmp_path / "lo_3.csv", losses),
    )
    assert [t.source for t in ds.trajectories] == ["Subj_1", "Subj_2"]
    assert ds.trajectories[0].actions[0] == (0, 1, 3)
    assert ds.trajectories[0].rewards[0] == (100, -1150, 50)


def test_load_igt_ragged_rows_accepted(tmp_path):
    rows = [["t"] * 5, ["1"] * 5, ["2"] * 3 + ["", ""]]
    ds = load_igt(write_rows(tmp_path / "c.csv", rows))
    assert [len(t) for t in ds.trajectories] == [5, 3]
    assert ds.horizon is None


def test_pool_and_truncate_lengths():
    parts = [make_dataset(IGT, [igt_traj([1] * n, f"s{n}")]) for n in (95, 100, 150)]
    pooled = pool_and_truncate(parts, 95)
    assert len(pooled) == 3 and pooled.horizon == 95
    assert all(len(t) == 95 for t in pooled.trajectories)


def test_pool_identity_at_min_length():
    t = igt_traj([0, 1, 2, 3] * 24 + [0], "short")
    pooled = pool_and_truncate([make_dataset(IGT, [t])], 97)
    assert pooled.trajectories[0] == t


def test_pool_too_short():
    with pytest.raises(LengthError, match="short"):
        pool_and_truncate([make_dataset(IGT, [igt_traj([0] * 95, "short")])], 96)


# ------------------------------------------------------------------ IPD


def test_load_ipd_all_cooperate(tmp_path):
    rows = [["traj_id", "round", "a1", "a2"]] + ipd_rows("1", [("C", "C")] * 9) + ipd_rows("2", [("C", "C")] * 9)
    ds = load_ipd(write_rows(tmp_path / "ipd.csv", rows))
    assert len(ds) == 2 and ds.horizon == 9
    np.testing.assert_array_equal(cooperation_rate(ds.trajectories), np.ones(9))


def test_load_ipd_drops_short(tmp_path, caplog):
    rows = [["traj_id", "round", "a1", "a2"]] + ipd_rows("1", [("C", "D")] * 9) + ipd_rows("2", [("C", "C")] * 8)
    ds = load_ipd(write_rows(tmp_path / "ipd.csv", rows))
    assert len(ds) == 1 and ds.n_dropped == 1
    assert "dropped 1" in caplog.text


def test_load_ipd_order_invariant(tmp_path):
    pairs = [("C", "D"), ("D", "D"), ("C", "C"), ("D", "C")] * 2 + [("C", "C")]
    rows = ipd_rows("a", pairs, (3, 0, 5, 1)) + ipd_rows("b", pairs[::-1], (3, 0, 5, 1))
    header = [["traj_id", "round", "a1", "a2", "R", "S", "T", "P"]]
    shuffled = [rows[i] for i in np.random.default_rng(0).permutation(len(rows))]
    a = load_ipd(write_rows(tmp_path / "a.csv", header + rows))
    b = load_ipd(write_rows(tmp_path / "b.csv", header + shuffled))
    assert a.trajectories == b.trajectories


def test_load_ipd_gap(tmp_path):
    rows = [["traj_id", "round", "a1", "a2"]] + [r for r in ipd_rows("1", [("C", "C")] * 9) if r[1] != 4]
    with pytest.raises(GapError, match="4"):
        load_ipd(write_rows(tmp_path / "g.csv", rows))


def test_load_ipd_mixed_encodings(tmp_path):
    rows = [["traj_id", "round", "a1", "a2"]] + ipd_rows("1", [("C", "C")] * 8 + [("1", "0")])
    with pytest.raises(ParseError, match="mixed"):
        load_ipd(write_rows(tmp_path / "m.csv", rows))


def test_load_ipd_numeric_encoding(tmp_path):
    rows = [["traj_id", "round", "a1", "a2"]] + ipd_rows("1", [("1", "0")] * 9)
    ds = load_ipd(write_rows(tmp_path / "n.csv", rows))
    assert ds.trajectories[0].actions == ((C,) * 9, (D,) * 9)


# ---------------------------------------------------- supervised sequences


def test_to_supervised_igt():
    (s,) = to_supervised(igt_traj([0, 2, 2]))
    np.testing.assert_array_equal(s.inputs, [[1, 0, 0, 0], [0, 0, 1, 0]])
    np.testing.assert_array_equal(s.targets, [[0, 0, 1, 0], [0, 0, 1, 0]])


def test_to_supervised_ipd_perspectives():
    tr = Trajectory(IPD, ((C, D), (D, D)))
    s1, s2 = to_supervised(tr)
    np.testing.assert_array_equal(s1.inputs[0], [0, 1, 1, 0])
    np.testing.assert_array_equal(s1.targets[0], [1, 0])
    np.testing.assert_array_equal(s2.inputs[0], [1, 0, 0, 1])
    assert (s1.focal_agent, s2.focal_agent) == (0, 1)


def test_nine_round_ipd_gives_two_sequences_of_eight():
    ds = simulate_ipd_population(5, SYNTHETIC_IPD_MIX, seed=1)
    for tr in ds.trajectories:
        seqs = to_supervised(tr)
        assert len(seqs) == 2 and all(len(s) == 8 for s in seqs)


def test_degenerate_trajectory():
    with pytest.raises(DegenerateTrajectoryError):
        to_supervised(igt_traj([1]))


def test_reward_features_optional():
    ds = simulate_igt_population(2, SynthPolicy("random"), seed=0, trials=10)
    (s,) = to_supervised(ds.trajectories[0], FeatureConfig(include_rewards=True))
    assert s.inputs.shape == (9, 5)


@given(st.integers(0, 10_000), st.sampled_from([IGT, IPD]))
def test_shift_consistency(seed, kind):
    ds = (
        simulate_igt_population(1, SynthPolicy("random"), trials=12, seed=seed)
        if kind == IGT
        else simulate_ipd_population(1, SYNTHETIC_IPD_MIX, seed=seed)
    )
    for s in to_supervised(ds.trajectories[0]):
        A = s.targets.shape[1]
        np.testing.assert_array_equal(s.targets[:-1], s.inputs[1:, :A])
        assert np.all(s.targets.sum(axis=1) == 1)


# ------------------------------------------------------------------ splits


def _toy(n, kind=IGT):
    if kind == IGT:
        return make_dataset(IGT, [igt_traj([k % 4, 1, 2], str(k)) for k in range(n)])
    return simulate_ipd_population(n, SYNTHETIC_IPD_MIX, seed=n)


def test_split_sizes():
    sp = split_train_test(_toy(10), 0.8, 3)
    assert (len(sp.train), len(sp.test)) == (8, 2)


def test_split_deterministic():
    assert split_train_test(_toy(50), 0.8, 7) == split_train_test(_toy(50), 0.8, 7)


def test_ipd_perspectives_stay_together():
    ds = _toy(20, IPD)
    sp = split_train_test(ds, 0.8, 1)
    test_ids = {s.traj_index for s in supervised(ds, sp.test)}
    train_ids = {s.traj_index for s in supervised(ds, sp.train)}
    assert not test_ids & train_ids
    for i in sp.test:
        assert [s.focal_agent for s in supervised(ds, [i])] == [0, 1]


def test_folds_partition():
    folds = make_folds(_toy(10), 5, 0)
    assert [len(f.test) for f in folds] == [2] * 5
    tests = [set(f.test) for f in folds]
    assert set().union(*tests) == set(range(10))
    assert sum(len(t) for t in tests) == 10
    assert folds == make_folds(_toy(10), 5, 0)


@pytest.mark.parametrize("k", [1, 11])
def test_folds_out_of_range(k):
    with pytest.raises(ConfigError):
        make_folds(_toy(10), k, 0)


@given(st.integers(1, 300), st.integers(0, 2**31))
def test_split_invariants(n, seed):
    ds = _toy(n)
    sp = split_train_test(ds, 0.8, seed)
    assert not set(sp.train) & set(sp.test)
    assert set(sp.train) | set(sp.test) == set(range(n))
    assert abs(len(sp.test) - 0.2 * n) <= 1


@given(st.integers(2, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(2, n))), st.integers(0, 2**31))
def test_fold_invariants(case, seed):
    n, k = case
    folds = make_folds(_toy(n), k, seed)
    seen = []
    for f in folds:
        assert set(f.train) | set(f.test) == set(range(n))
        assert not set(f.train) & set(f.test)
        seen += list(f.test)
    assert sorted(seen) == list(range(n))


# ---------------------------------------------------------- serialisation


def test_igt_round_trip(tmp_path):
    sim = simulate_igt_population(6, SynthPolicy("epsilon_greedy_igt"), seed=2, trials=30)
    paths = [tmp_path / n for n in ("c.csv", "w.csv", "l.csv")]
    save_igt(sim, *paths)
    first = load_igt(*paths)
    assert [t.actions for t in first.trajectories] == [t.actions for t in sim.trajectories]
    assert [t.rewards for t in first.trajectories] == [t.rewards for t in sim.trajectories]
    save_igt(first, *[tmp_path / f"2{p.name}" for p in paths])
    second = load_igt(*[tmp_path / f"2{p.name}" for p in paths])
    assert first.trajectories == second.trajectories


def test_ipd_round_trip(tmp_path):
    sim = simulate_ipd_population(20, SYNTHETIC_IPD_MIX, seed=4)
    save_ipd(sim, tmp_path / "a.csv")
    first = load_ipd(tmp_path / "a.csv")
    persisted = lambda ds: [(t.source, t.actions, t.rewards, t.spec) for t in ds.trajectories]
    assert persisted(first) == persisted(sim)
    save_ipd(first, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
