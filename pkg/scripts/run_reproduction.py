"""Model comparison on a real IGT or IPD dataset over several split seeds.

IGT: pass one choice matrix per study; trajectories are pooled and cut to
--truncate trials (subjects with fewer are an error). IPD: one canonical CSV.

    python3 scripts/run_reproduction.py --game igt --data choice_95.csv choice_100.csv choice_150.csv
    python3 scripts/run_reproduction.py --game ipd --data ipd.csv --seeds 0 1 2 3 4
"""
import argparse
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from decision_lstm.dataset import load_igt, load_ipd, pool_and_truncate
from decision_lstm.evaluation import write_report
from decision_lstm.experiments import compare_models
from decision_lstm.games import IGT
from decision_lstm.predictors import TrainConfig


@dataclass
class Config:
    game: str
    data: list[str]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    truncate: int = 95
    lag: int = 1
    out: str = "runs/reproduction"


def load(cfg: Config):
    if cfg.game == IGT:
        return pool_and_truncate([load_igt(p) for p in cfg.data], cfg.truncate)
    return load_ipd(cfg.data[0])


def run(cfg: Config) -> dict:
    ds = load(cfg)
    kinds = ("lstm", "var") if cfg.game == IGT else ("lstm", "var", "logistic")
    out = Path(cfg.out)
    print(f"{len(ds)} {cfg.game} trajectories")
    per_seed = {}
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        cmp = compare_models(ds, seed, kinds=kinds, train_config=TrainConfig(seed=seed), lag=cfg.lag)
        for kind, rep in cmp.reports.items():
            write_report(rep, out / f"seed_{seed}", kind)
        per_seed[seed] = cmp.avg_mse()
        print(f"seed {seed}: " + "  ".join(f"{k} {v:.4f}" for k, v in per_seed[seed].items())
              + f"  ({time.perf_counter() - t0:.0f}s)")
    means = {k: float(np.mean([m[k] for m in per_seed.values()])) for k in kinds}
    print("mean: " + "  ".join(f"{k} {v:.4f}" for k, v in means.items()))
    summary = {"config": asdict(cfg), "n": len(ds), "seeds": per_seed, "mean": means}
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--game", choices=["igt", "ipd"], required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--truncate", type=int, default=95)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--out", default="runs/reproduction")
    p.add_argument("-v", "--verbose", action="store_true")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)
    run(Config(a.game, a.data, a.seeds, a.truncate, a.lag, a.out))
