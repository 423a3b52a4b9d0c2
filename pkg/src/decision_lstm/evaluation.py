"""Prediction error and population-level behavioral curves."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    DEFAULT_FEATURES,
    Dataset,
    FeatureConfig,
    Split,
    SupervisedSequence,
    atomic_write_text,
    dataset_hash,
    supervised,
    write_json,
)
from .errors import ConfigError, DimensionError, GameKindError
from .games import COOPERATE, GOOD_DECKS, IGT, IGT_ALPHABET, IPD, IPD_ALPHABET, Trajectory
from .predictors import model_kind, predict_many


def mse_per_step(predictions: Sequence, targets: Sequence) -> np.ndarray:
    """Mean over sequences and alphabet components of (p - y)^2, per step.

    Sequences may differ in length; step t averages the sequences that
    reach it.
    """
    if len(predictions) != len(targets):
        raise DimensionError(f"{len(predictions)} prediction sequences for {len(targets)} target sequences")
    if not targets:
        return np.zeros(0)
    T = max(len(y) for y in targets)
    total = np.zeros(T)
    count = np.zeros(T)
    for n, (p, y) in enumerate(zip(predictions, targets)):
        p = np.asarray(p, dtype=np.float64).reshape(len(p), -1) if len(p) else np.zeros((0, 0))
        y = np.asarray(y, dtype=np.float64)
        if p.shape != y.shape:
            raise DimensionError(f"sequence {n}: predictions {p.shape} vs targets {y.shape}")
        L = len(y)
        total[:L] += ((p - y) ** 2).mean(axis=1)
        count[:L] += 1
    return total / np.maximum(count, 1)


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average; the window shrinks at the edges."""
    if window < 1:
        raise ConfigError("smoothing window must be >= 1")
    if window == 1:
        return x.copy()
    lo = (window - 1) // 2
    hi = window // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(len(x))
    a = np.maximum(idx - lo, 0)
    b = np.minimum(idx + hi + 1, len(x))
    return (c[b] - c[a]) / (b - a)


def _rate_matrix(data, game_kind: str, alphabet: int, positive, start: int) -> np.ndarray:
    """(n, T) array of per-step probabilities of the 'positive' actions.

    Accepts trajectories, supervised sequences (their targets), integer
    choice arrays (n, T) or probability arrays (n, T, alphabet).
    """
    data = list(data) if not isinstance(data, np.ndarray) else data
    if len(data) == 0:
        return np.zeros((0, 0))
    first = data[0]
    if isinstance(first, Trajectory):
        for tr in data:
            if tr.game_kind != game_kind:
                raise GameKindError(f"expected {game_kind} trajectories, got {tr.game_kind}")
        rows = [np.isin(np.asarray(a[start:]), positive).astype(float) for tr in data for a in tr.actions]
        return np.asarray(rows)
    if isinstance(first, SupervisedSequence):
        for s in data:
            if s.game_kind != game_kind:
                raise GameKindError(f"expected {game_kind} sequences, got {s.game_kind}")
        return np.asarray([s.targets[:, positive].sum(axis=1) for s in data])
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] != alphabet:
            raise GameKindError(f"predictions over {arr.shape[2]} actions are not {game_kind} predictions")
        return np.clip(arr[:, :, positive].sum(axis=2), 0.0, 1.0)
    if arr.ndim == 2:
        if arr.size and (arr.min() < 0 or arr.max() >= alphabet):
            raise GameKindError(f"choice indices outside the {game_kind} alphabet")
        return np.isin(arr, positive).astype(float)
    raise DimensionError(f"cannot read population data of shape {arr.shape}")


def better_action_rate(data, window: int = 5, start: int = 0) -> np.ndarray:
    """Per-step fraction choosing deck C or D, smoothed by a centred moving
    average. `start` skips leading trials of trajectory input."""
    rates = _rate_matrix(data, IGT, IGT_ALPHABET, list(GOOD_DECKS), start)
    if rates.size == 0:
        return np.zeros(0)
    return _moving_average(rates.mean(axis=0), window)


def cooperation_rate(data, start: int = 0) -> np.ndarray:
    """Per-round fraction of Cooperate choices (every player of every dyad).

    Probability arrays give the expected rate, i.e. mean P(Cooperate).
    """
    rates = _rate_matrix(data, IPD, IPD_ALPHABET, [COOPERATE], start)
    if rates.size == 0:
        return np.zeros(0)
    return rates.mean(axis=0)


def argmax_one_hot(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    return np.eye(pred.shape[-1])[pred.argmax(axis=-1)]


# ------------------------------------------------------------------ reports


@dataclass(frozen=True)
class EvalConfig:
    window: int = 5
    argmax_curves: bool = False
    features: FeatureConfig = DEFAULT_FEATURES
    on: str = "test"  # or "all"


@dataclass
class EvalReport:
    model: str
    game_kind: str
    dataset_hash: str
    mse_per_step: list[float]
    avg_mse: float
    truth_curve: list[float]
    pred_curve: list[float]
    n_test: int
    seed: int | None
    wall_time_s: float = field(default=0.0, compare=False)
    fold: int | None = None

    def to_json(self) -> dict:
        # wall time is logged, not written, so reruns stay byte-identical
        data = asdict(self)
        data.pop("wall_time_s")
        return data


def population_curves(game_kind: str, seqs, preds, window: int, argmax: bool = False):
    """(truth, prediction) curves over the predicted steps."""
    P = np.asarray(preds)
    if argmax:
        P = argmax_one_hot(P)
    if game_kind == IGT:
        return better_action_rate(seqs, window), better_action_rate(P, window)
    return cooperation_rate(seqs), cooperation_rate(P)


def evaluate_sequences(model, seqs, game_kind: str, config: EvalConfig = EvalConfig(), seed=None, data_hash="", fold=None) -> EvalReport:
    if not seqs:
        raise ConfigError("nothing to evaluate: the test set is empty")
    t0 = time.perf_counter()
    preds = predict_many(model, seqs)
    per_step = mse_per_step(preds, [s.targets for s in seqs])
    truth, pred = population_curves(game_kind, seqs, preds, config.window, config.argmax_curves)
    n_traj = len({(s.traj_index, s.source) for s in seqs})
    return EvalReport(
        model=model_kind(model),
        game_kind=game_kind,
        dataset_hash=data_hash,
        mse_per_step=[float(v) for v in per_step],
        avg_mse=float(np.mean(per_step)),
        truth_curve=[float(v) for v in truth],
        pred_curve=[float(v) for v in pred],
        n_test=n_traj,
        seed=seed,
        wall_time_s=time.perf_counter() - t0,
        fold=fold,
    )


def build_report(model, dataset: Dataset, split: Split | None, config: EvalConfig = EvalConfig()) -> EvalReport:
    """Evaluate on the test side of `split` (every trajectory when
    ``config.on == "all"`` or split is None)."""
    if config.on == "all" or split is None:
        indices = range(len(dataset))
    else:
        indices = split.test
    if len(indices) == 0:
        raise ConfigError("the test split is empty")
    seqs = supervised(dataset, indices, config.features)
    return evaluate_sequences(
        model,
        seqs,
        dataset.game_kind,
        config,
        seed=None if split is None else split.seed,
        data_hash=dataset_hash(dataset),
        fold=None if split is None else split.fold,
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> dict:
    per_step = np.mean([r.mse_per_step for r in reports], axis=0)
    return {
        "model": reports[0].model,
        "game_kind": reports[0].game_kind,
        "dataset_hash": reports[0].dataset_hash,
        "n_folds": len(reports),
        "fold_avg_mse": [r.avg_mse for r in reports],
        "avg_mse": float(np.mean([r.avg_mse for r in reports])),
        "mse_per_step": [float(v) for v in per_step],
        "truth_curve": [float(v) for v in np.mean([r.truth_curve for r in reports], axis=0)],
        "pred_curve": [float(v) for v in np.mean([r.pred_curve for r in reports], axis=0)],
        "n_test": int(sum(r.n_test for r in reports)),
        "seed": reports[0].seed,
    }


def curve_csv(truth, pred) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "truth", "prediction"])
    for t, (a, b) in enumerate(zip(truth, pred), start=1):
        w.writerow([t, repr(float(a)), repr(float(b))])
    return buf.getvalue()


def write_report(report: EvalReport | dict, out_dir, name: str = "report") -> tuple[Path, Path]:
    data = report.to_json() if isinstance(report, EvalReport) else report
    out_dir = Path(out_dir)
    jpath = out_dir / f"{name}.json"
    cpath = out_dir / f"{name}_curve.csv"
    write_json(jpath, data)
    atomic_write_text(cpath, curve_csv(data["truth_curve"], data["pred_curve"]))
    return jpath, cpath
