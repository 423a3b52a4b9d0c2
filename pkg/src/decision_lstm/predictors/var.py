"""Vector autoregression on one-hot feature vectors, fit by least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import solve_ols


@dataclass
class VARModel:
    lag: int
    coefs: np.ndarray  # (lag, alphabet_out, feature_in); coefs[k] multiplies x_{t-k}
    intercept: np.ndarray  # (alphabet_out,)

    @property
    def feature_dim(self) -> int:
        return self.coefs.shape[2]

    @property
    def alphabet(self) -> int:
        return self.coefs.shape[1]


def lagged_design(inputs: np.ndarray, lag: int) -> np.ndarray:
    """Rows [1, x_t, x_{t-1}, ..., x_{t-lag+1}] for every t, zero-padded before the start."""
    T, F = inputs.shape
    padded = np.vstack([np.zeros((lag - 1, F)), inputs])
    cols = [np.ones((T, 1))]
    for k in range(lag):
        cols.append(padded[lag - 1 - k : lag - 1 - k + T])
    return np.hstack(cols)


def fit_var(seqs, lag: int = 1) -> VARModel:
    if lag < 1:
        raise ConfigError(f"VAR lag must be >= 1, got {lag}")
    seqs = [s for s in seqs if len(s) > 0]
    if not seqs:
        raise DataError("no training rows for the VAR fit")
    X = np.vstack([lagged_design(s.inputs, lag)[:, 1:] for s in seqs])
    Y = np.vstack([s.targets for s in seqs])
    # the intercept is left out of the ridge penalty: fit on centred data
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    B = solve_ols(X - x_mean, Y - y_mean)  # (lag*F, A)
    intercept = y_mean - x_mean @ B
    F = seqs[0].inputs.shape[1]
    coefs = B.reshape(lag, F, -1).transpose(0, 2, 1)
    return VARModel(lag, np.ascontiguousarray(coefs), intercept)


def var_raw(model: VARModel, history) -> np.ndarray:
    """Unclipped c + sum_k A_k x_{t-k} from the most recent feature vectors."""
    out = model.intercept.copy()
    hist = list(history)[-model.lag :]
    for k, x in enumerate(reversed(hist)):
        out += model.coefs[k] @ np.asarray(x, dtype=np.float64)
    return out


def var_predict(model: VARModel, history) -> np.ndarray:
    # clipped but deliberately not renormalised
    return np.clip(var_raw(model, history), 0.0, 1.0)


def var_predict_sequence(model: VARModel, inputs: np.ndarray) -> np.ndarray:
    if len(inputs) == 0:
        return np.zeros((0, model.alphabet))
    D = lagged_design(np.asarray(inputs, dtype=np.float64), model.lag)
    B = np.vstack([model.intercept[None], model.coefs.transpose(0, 2, 1).reshape(-1, model.alphabet)])
    return np.clip(D @ B, 0.0, 1.0)
