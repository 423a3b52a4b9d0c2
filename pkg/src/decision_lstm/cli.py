"""decision-lstm command line: simulate | train | eval | gradcheck.

Every subcommand accepts ``--seed``, ``--out`` and ``--config``. A config
file holds ``key = value`` lines named after the long flags (dashes or
underscores); flags given on the command line override it.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .dataset import (
    FeatureConfig,
    atomic_write_text,
    feature_dim,
    make_dataset,
    load_igt,
    load_ipd,
    make_folds,
    manifest,
    pool_and_truncate,
    save_igt,
    save_ipd,
    split_train_test,
    supervised,
    write_json,
)
from .errors import CompatibilityError, ConfigError, DataError, NumericError
from .evaluation import EvalConfig, aggregate_reports, build_report, write_report
from .experiments import (
    GRADCHECK_TOL,
    child_seeds,
    gradcheck,
    simulate_igt_population,
    simulate_ipd_population,
)
from .games import IGT, IPD, POLICY_KINDS, SCHEDULES, GameSpec, SynthPolicy, require_valid, simulate_ipd
from .predictors import (
    MODEL_KINDS,
    TrainConfig,
    checkpoint_dict,
    fit_model,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)

log = logging.getLogger("decision_lstm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", help="key = value file mirroring the flags")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--game", choices=[IGT, IPD], required=True)
    p.add_argument("--data", action="append", help="IGT choices CSV (repeatable) or IPD canonical CSV")
    p.add_argument("--wins", action="append", help="IGT wins matrix, aligned with --data")
    p.add_argument("--losses", action="append", help="IGT losses matrix, aligned with --data")
    p.add_argument("--truncate", type=int, help="pool and truncate IGT trajectories to this length")
    p.add_argument("--ipd-length", type=int, default=9, help="keep IPD trajectories of exactly this many rounds")
    p.add_argument("--include-rewards", action="store_true", help="append the reward to the input features")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="decision-lstm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="generate synthetic trajectories")
    sim.add_argument("--game", choices=[IGT, IPD], required=True)
    sim.add_argument("--n", type=int, default=100, help="number of trajectories")
    sim.add_argument("--scheme", type=int, default=1)
    sim.add_argument("--policy", default="epsilon_greedy_igt", choices=POLICY_KINDS)
    sim.add_argument("--epsilon", type=float, default=0.1)
    sim.add_argument("--trials", type=int, default=95)
    sim.add_argument("--schedule", choices=SCHEDULES, default="iid", help="IGT losses: i.i.d. per card or shuffled 10-card blocks")
    sim.add_argument("--p1", default="tit_for_tat", choices=POLICY_KINDS)
    sim.add_argument("--p2", default="tit_for_tat", choices=POLICY_KINDS)
    sim.add_argument("--noise1", type=float, default=0.0)
    sim.add_argument("--noise2", type=float, default=0.0)
    sim.add_argument("--mix", help="comma list of policy[:noise]; each dyad draws both players from it")
    sim.add_argument("--rounds", type=int, default=9)
    for name, default in (("R", 3.0), ("S", 0.0), ("T", 5.0), ("P", 1.0)):
        sim.add_argument(f"--{name}", type=float, default=default)

    tr = sub.add_parser("train", parents=[common], help="fit a predictor")
    _data_args(tr)
    tr.add_argument("--model", choices=MODEL_KINDS, required=True)
    tr.add_argument("--hidden", type=int, default=10)
    tr.add_argument("--layers", type=int, default=2)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--lr", type=float, default=0.01)
    tr.add_argument("--batch-size", type=int, default=32)
    tr.add_argument("--clip", type=float, default=5.0)
    tr.add_argument("--val-fraction", type=float, default=0.1)
    tr.add_argument("--patience", type=int, default=20)
    tr.add_argument("--lag", type=int, default=1)
    tr.add_argument("--l2", type=float, default=1e-4)
    tr.add_argument("--ratio", type=float, default=0.8, help="train fraction of the split")
    tr.add_argument("--train-on", choices=["split", "all"], default="split")

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    _data_args(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--folds", type=int, help="k-fold cross-validation (retrains per fold)")
    ev.add_argument("--on", choices=["test", "all"], default="test")
    ev.add_argument("--window", type=int, default=5)
    ev.add_argument("--argmax-curves", action="store_true")

    gc = sub.add_parser("gradcheck", parents=[common], help="BPTT vs finite differences")
    gc.add_argument("--seeds", type=int, default=3)
    gc.add_argument("--steps", type=int, default=3)
    gc.add_argument("--hidden", type=int, default=10)
    gc.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    return parser


def read_config_file(path) -> dict[str, str]:
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _config_path(argv) -> str | None:
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _config_path(argv)
    command = next((t for t in argv if t in COMMANDS), None)
    if not path or command is None:
        return parser.parse_args(argv)
    if not Path(path).exists():
        raise ConfigError(f"config file {path} not found")
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    appended = {}
    for key, raw in read_config_file(path).items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigError(f"{path}: unknown key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            appended[key] = [v.strip() for v in raw.split(",") if v.strip()]
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError:
                raise ConfigError(f"{path}: bad value {raw!r} for {key}") from None
            if action.choices and defaults[key] not in action.choices:
                raise ConfigError(f"{path}: {key}={raw!r} not in {list(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    # append-style flags given on the command line replace the file's list
    for key, values in appended.items():
        if getattr(args, key) is None:
            setattr(args, key, values)
    return args


# ---------------------------------------------------------------- helpers


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _run_manifest(args, inputs=(), extra=None) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose", "out")}
    return {
        "tool": "decision-lstm",
        "tool_version": __version__,
        "command": args.command,
        "config": config,
        "seed": args.seed,
        "input_hashes": {str(p): file_hash(p) for p in inputs},
        **(extra or {}),
    }


def _inputs(args) -> list[str]:
    return [p for group in (args.data, args.wins, args.losses) for p in (group or [])]


def load_data(args):
    if not args.data:
        raise ConfigError("--data is required")
    for p in _inputs(args):
        if not Path(p).exists():
            raise DataError(f"input file not found: {p}")
    if args.game == IPD:
        if len(args.data) != 1:
            raise ConfigError("IPD takes a single --data file")
        return load_ipd(args.data[0], args.ipd_length)
    wins = args.wins or [None] * len(args.data)
    losses = args.losses or [None] * len(args.data)
    if len(wins) != len(args.data) or len(losses) != len(args.data):
        raise ConfigError("--wins/--losses must be given once per --data file")
    parts = [load_igt(c, w, lo) for c, w, lo in zip(args.data, wins, losses)]
    if args.truncate:
        return pool_and_truncate(parts, args.truncate)
    if len(parts) == 1:
        return parts[0]
    return pool_and_truncate(parts, min(len(t) for d in parts for t in d.trajectories))


def _features(args) -> FeatureConfig:
    return FeatureConfig(include_rewards=bool(args.include_rewards))


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        gradient_clip_norm=args.clip,
        validation_fraction=args.val_fraction,
        early_stop_patience=args.patience,
        hidden=args.hidden,
        layers=args.layers,
    )


# --------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    out = Path(args.out)
    if args.game == IGT:
        policy = SynthPolicy(args.policy, epsilon=args.epsilon)
        ds = simulate_igt_population(args.n, policy, args.scheme, args.trials, args.seed, args.schedule)
        files = [out / "choices.csv", out / "wins.csv", out / "losses.csv"]
        save_igt(ds, *files)
    else:
        spec = require_valid(GameSpec(args.R, args.S, args.T, args.P, horizon=args.rounds))
        if args.mix:
            mix = []
            for item in args.mix.split(","):
                kind, _, noise = item.strip().partition(":")
                mix.append(SynthPolicy(kind, noise=float(noise or 0.0)))
            ds = simulate_ipd_population(args.n, mix, spec, args.rounds, args.seed)
        else:
            p1 = SynthPolicy(args.p1, noise=args.noise1)
            p2 = SynthPolicy(args.p2, noise=args.noise2)
            trajs = [
                simulate_ipd(p1, p2, spec, args.rounds, s, meta=(("id", str(k + 1)),))
                for k, s in enumerate(child_seeds(args.seed, args.n))
            ]
            ds = make_dataset(IPD, trajs)
        files = [out / "ipd.csv"]
        save_ipd(ds, files[0])
    ds_manifest = manifest(ds, args.seed)
    ds_manifest["source_files"] = [f.name for f in files]
    write_json(out / "manifest.json", _run_manifest(args, extra={"dataset": ds_manifest}))
    print(f"wrote {len(ds)} {args.game} trajectories to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = Path(args.out)
    ds = load_data(args)
    features = _features(args)
    if args.train_on == "all":
        split = None
        train_idx = range(len(ds))
    else:
        split = split_train_test(ds, args.ratio, args.seed)
        train_idx = split.train
    seqs = supervised(ds, train_idx, features)
    config = _train_config(args)
    model, history = fit_model(args.model, seqs, config, lag=args.lag, l2=args.l2)
    extra = {
        "split": {"ratio": args.ratio, "seed": args.seed, "train_on": args.train_on},
        "features": asdict(features),
        "lag": args.lag,
        "l2": args.l2,
        "n_train_trajectories": len(train_idx),
    }
    ck = checkpoint_dict(model, ds.game_kind, config if args.model == "lstm" else None, args.seed, extra)
    save_checkpoint(out / "checkpoint.json", ck)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for row in history.rows() if history else []:
        w.writerow([row["epoch"], repr(row["train_loss"]), "" if row["val_loss"] is None else repr(row["val_loss"])])
    atomic_write_text(out / "history.csv", buf.getvalue())
    write_json(out / "manifest.json", _run_manifest(args, _inputs(args), {"dataset": manifest(ds, args.seed)}))
    log.info("split seed %d", args.seed)
    print(f"trained {args.model} on {len(train_idx)} trajectories (split seed {args.seed}); checkpoint in {out}")
    return EXIT_OK


def _check_compatible(ck: dict, ds, features: FeatureConfig) -> None:
    if ck["game_kind"] != ds.game_kind:
        raise CompatibilityError(f"checkpoint was trained on {ck['game_kind']} data, dataset is {ds.game_kind}")
    if ck["kind"] != "logistic":
        want = feature_dim(ds.game_kind, features)
        if ck["dims"]["feature_dim"] != want or ck["dims"]["alphabet"] != ds.alphabet:
            raise CompatibilityError(
                f"checkpoint dims {ck['dims']} do not fit features {want} / alphabet {ds.alphabet}"
            )


def cmd_eval(args) -> int:
    out = Path(args.out)
    ck = load_checkpoint(args.checkpoint)
    ds = load_data(args)
    features = FeatureConfig(**ck.get("features", {})) if "features" in ck else _features(args)
    _check_compatible(ck, ds, features)
    eval_config = EvalConfig(window=args.window, argmax_curves=args.argmax_curves, features=features, on=args.on)
    inputs = _inputs(args) + [args.checkpoint]
    if args.folds:
        config = TrainConfig(**ck["train_config"]) if ck.get("train_config") else TrainConfig(seed=args.seed)
        reports = []
        for split in make_folds(ds, args.folds, args.seed):
            model, _ = fit_model(ck["kind"], supervised(ds, split.train, features), config,
                                 lag=ck.get("lag", 1), l2=ck.get("l2", 1e-4))
            rep = build_report(model, ds, split, EvalConfig(args.window, args.argmax_curves, features, "test"))
            reports.append(rep)
            write_report(rep, out, f"fold_{split.fold + 1}")
            print(f"fold {split.fold + 1}: avg_mse {rep.avg_mse:.6f}")
        agg = aggregate_reports(reports)
        write_report(agg, out, "aggregate")
        print(f"aggregate avg_mse {agg['avg_mse']:.6f} over {args.folds} folds")
    else:
        model = model_from_checkpoint(ck)
        split_info = ck.get("split", {})
        split = None
        if args.on == "test":
            if split_info.get("train_on") == "all":
                raise ConfigError("checkpoint was trained on all data; evaluate with --on all")
            split = split_train_test(ds, split_info.get("ratio", 0.8), split_info.get("seed", args.seed))
        rep = build_report(model, ds, split, eval_config)
        write_report(rep, out, "report")
        log.info("evaluation took %.3f s", rep.wall_time_s)
        print(f"{rep.model} avg_mse {rep.avg_mse:.6f} on {rep.n_test} trajectories")
    write_json(out / "manifest.json", _run_manifest(args, inputs, {"dataset": manifest(ds, args.seed)}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errors = [gradcheck(args.seed + k, args.steps, args.hidden, corrupt=args.corrupt) for k in range(args.seeds)]
    worst = max(errors)
    for k, e in enumerate(errors):
        print(f"seed {args.seed + k}: max_rel_err = {e:.3e}")
    ok = worst < GRADCHECK_TOL
    print(f"max_rel_err < {GRADCHECK_TOL:g}: {'PASS' if ok else 'FAIL'} ({worst:.3e})")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
