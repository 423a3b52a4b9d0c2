"""Logistic regression on handcrafted IPD features.

Feature order (length 9):
    focal last action one-hot (D, C), opponent last action one-hot (D, C),
    both cooperated, both defected, round index / horizon,
    (R - P) / (T - S), (T - R) / (T - S)
The two payoff ratios are zero when no game spec is known.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..games import COOPERATE, DEFECT, GameSpec
from ..numerics import sigmoid

log = logging.getLogger(__name__)

N_FEATURES = 9


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    iterations: int = 0
    grad_norm: float = float("nan")

    def prob(self, features) -> np.ndarray:
        return sigmoid(np.asarray(features, dtype=np.float64) @ self.weights + self.bias)


def lr_feature_vector(own_last: int, opp_last: int, t: int, horizon: int, spec: GameSpec | None) -> np.ndarray:
    f = np.zeros(N_FEATURES)
    f[own_last] = 1.0
    f[2 + opp_last] = 1.0
    f[4] = float(own_last == COOPERATE and opp_last == COOPERATE)
    f[5] = float(own_last == DEFECT and opp_last == DEFECT)
    f[6] = t / horizon
    if spec is not None:
        spread = spec.T - spec.S
        f[7] = (spec.R - spec.P) / spread
        f[8] = (spec.T - spec.R) / spread
    return f


def build_lr_features(traj, focal: int, t: int, spec: GameSpec | None = None, horizon: int | None = None) -> np.ndarray:
    """Features for predicting the focal agent's action at round index t (0-based)."""
    if t < 1:
        raise DataError("round 0 has no history to build features from")
    own = traj.actions[focal][t - 1]
    opp = traj.actions[1 - focal][t - 1]
    return lr_feature_vector(own, opp, t, horizon or len(traj), spec)


def sequence_features(seq) -> np.ndarray:
    """Feature rows aligned with a supervised IPD sequence's targets."""
    horizon = seq.horizon or (len(seq) + 1)
    rows = []
    for k in range(len(seq)):
        own = int(np.argmax(seq.inputs[k, :2]))
        opp = int(np.argmax(seq.inputs[k, 2:4]))
        rows.append(lr_feature_vector(own, opp, k + 1, horizon, seq.spec))
    return np.asarray(rows).reshape(-1, N_FEATURES)


def _objective(theta, X, y, l2):
    """Penalised mean NLL, its gradient and Hessian; theta = (w, b)."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    n = len(y)
    # log(1 + e^z) - y z, stable for large |z|
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z)) / n
    p = sigmoid(z)
    Xb = np.column_stack([X, np.ones(n)])
    penalty = np.full(len(theta), l2)
    penalty[-1] = 0.0  # bias unpenalised
    grad = Xb.T @ (p - y) / n + penalty * theta
    hess = (Xb * (p * (1 - p))[:, None]).T @ Xb / n + np.diag(penalty)
    return nll + 0.5 * l2 * float(w @ w), grad, hess


def fit_logistic(rows, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 5000) -> LogisticModel:
    """Damped Newton on the L2-penalised mean log-likelihood (bias unpenalised).

    Stops when the gradient norm falls below `tol` or after `max_iter`
    iterations. Steps are backtracked until the objective decreases
    (Armijo rule), so the iteration is monotone.
    """
    rows = list(rows)
    if not rows:
        raise DataError("no rows to fit the logistic model")
    if l2 < 0:
        raise ConfigError("l2 must be >= 0")
    X = np.asarray([r[0] for r in rows], dtype=np.float64)
    y = np.asarray([r[1] for r in rows], dtype=np.float64)
    theta = np.zeros(X.shape[1] + 1)
    obj, grad, hess = _objective(theta, X, y, l2)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        # tiny jitter keeps the solve defined when the data pin p to 0 or 1
        step = np.linalg.solve(hess + 1e-12 * np.eye(len(theta)), grad)
        slope = float(grad @ step)
        if not slope > 0:
            step, slope = grad, float(grad @ grad)
        size = 1.0
        while True:
            cand = theta - size * step
            new_obj, new_grad, new_hess = _objective(cand, X, y, l2)
            if new_obj <= obj - 1e-4 * size * slope or size < 1e-10:
                break
            size *= 0.5
        if new_obj > obj:
            break
        theta, obj, grad, hess = cand, new_obj, new_grad, new_hess
        gnorm = float(np.linalg.norm(grad))
    if gnorm >= tol:
        log.debug("logistic fit stopped after %d iterations with gradient norm %.2e", it, gnorm)
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), it, gnorm)


def logistic_rows(seqs):
    """(features, cooperated) rows from supervised IPD sequences."""
    rows = []
    for s in seqs:
        F = sequence_features(s)
        for k in range(len(s)):
            rows.append((F[k], int(s.targets[k, COOPERATE] == 1.0)))
    return rows


def logistic_predict_sequence(model: LogisticModel, seq) -> np.ndarray:
    p = model.prob(sequence_features(seq))
    return np.column_stack([1.0 - p, p])
