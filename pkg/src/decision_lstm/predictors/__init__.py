"""Next-action predictors behind a common interface.

``predict_sequence(model, seq)`` is teacher-forced: the prediction for step
t only sees the observed inputs up to t.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import CompatibilityError, ConfigError, GameKindError
from ..games import IPD
from .logistic import (
    N_FEATURES,
    LogisticModel,
    build_lr_features,
    fit_logistic,
    logistic_predict_sequence,
    logistic_rows,
    lr_feature_vector,
)
from .lstm import (
    LSTMLayer,
    LSTMParams,
    TrainConfig,
    TrainHistory,
    batch_loss_and_grad,
    init_lstm,
    lstm_bptt,
    lstm_cell,
    lstm_forward,
    predict_batch,
    stack_sequences,
    train_lstm,
)
from .var import VARModel, fit_var, var_predict, var_predict_sequence

CHECKPOINT_VERSION = 1
MODEL_KINDS = ("lstm", "var", "logistic")


def model_kind(model) -> str:
    if isinstance(model, LSTMParams):
        return "lstm"
    if isinstance(model, VARModel):
        return "var"
    if isinstance(model, LogisticModel):
        return "logistic"
    raise TypeError(f"not a predictor: {type(model).__name__}")


def predict_sequence(model, seq) -> list[np.ndarray]:
    kind = model_kind(model)
    if len(seq) == 0:
        return []
    if kind == "lstm":
        return list(predict_batch(model, seq.inputs[None])[0])
    if kind == "var":
        return list(var_predict_sequence(model, seq.inputs))
    if seq.game_kind != IPD:
        raise GameKindError("the logistic baseline only predicts IPD cooperation")
    return list(logistic_predict_sequence(model, seq))


def predict_many(model, seqs) -> list[np.ndarray]:
    """predict_sequence over many sequences, batching the LSTM forward pass."""
    seqs = list(seqs)
    if model_kind(model) == "lstm" and seqs:
        X, _, M = stack_sequences(seqs)
        P = predict_batch(model, X)
        return [P[n, : len(s)] for n, s in enumerate(seqs)]
    return [np.asarray(predict_sequence(model, s)).reshape(len(s), -1) for s in seqs]


def fit_model(kind: str, seqs, config: TrainConfig = TrainConfig(), lag: int = 1, l2: float = 1e-4):
    """Train any predictor kind. Returns (model, history or None)."""
    seqs = list(seqs)
    if kind == "lstm":
        return train_lstm(seqs, config)
    if kind == "var":
        return fit_var(seqs, lag), None
    if kind == "logistic":
        if any(s.game_kind != IPD for s in seqs):
            raise GameKindError("the logistic baseline is defined for IPD data only")
        return fit_logistic(logistic_rows(seqs), l2), None
    raise ConfigError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")


# -------------------------------------------------------------- checkpoints


def checkpoint_dict(model, game_kind: str, train_config: TrainConfig | None = None, seed=None, extra=None) -> dict:
    kind = model_kind(model)
    if kind == "lstm":
        dims = {
            "feature_dim": model.feature_dim,
            "alphabet": model.alphabet,
            "hidden": model.hidden,
            "layers": len(model.layers),
        }
        weights = model.flat()
    elif kind == "var":
        dims = {"feature_dim": model.feature_dim, "alphabet": model.alphabet, "lag": model.lag}
        weights = np.concatenate([model.coefs.ravel(), model.intercept])
    else:
        dims = {"feature_dim": N_FEATURES, "alphabet": 2}
        weights = np.append(model.weights, model.bias)
    return {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "game_kind": game_kind,
        "dims": dims,
        # json floats are written with repr, which round-trips exactly
        "weights": [float(w) for w in weights],
        "train_config": asdict(train_config) if train_config else None,
        "seed": seed,
        **(extra or {}),
    }


def model_from_checkpoint(ck: dict):
    if ck.get("format_version") != CHECKPOINT_VERSION:
        raise CompatibilityError(f"unsupported checkpoint version {ck.get('format_version')!r}")
    dims = ck["dims"]
    w = np.asarray(ck["weights"], dtype=np.float64)
    kind = ck["kind"]
    if kind == "lstm":
        template = init_lstm(dims["feature_dim"], dims["alphabet"], 0, dims["hidden"], dims["layers"])
        return template.with_flat(w)
    if kind == "var":
        lag, A, F = dims["lag"], dims["alphabet"], dims["feature_dim"]
        n = lag * A * F
        if w.size != n + A:
            raise CompatibilityError("VAR checkpoint weight count does not match its dims")
        return VARModel(lag, w[:n].reshape(lag, A, F), w[n:].copy())
    if kind == "logistic":
        return LogisticModel(w[:-1].copy(), float(w[-1]))
    raise CompatibilityError(f"unknown model kind {kind!r} in checkpoint")


def save_checkpoint(path, ck: dict) -> None:
    from ..dataset import write_json

    write_json(path, ck)


def load_checkpoint(path) -> dict:
    return json.loads(Path(path).read_text())
