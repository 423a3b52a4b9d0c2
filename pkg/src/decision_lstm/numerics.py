"""Small dense numerics shared by the predictors.

Vectors and matrices are plain float64 numpy arrays. Functions here never
mutate their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericError

RIDGE_LAMBDA = 1e-8


def as_vec(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis, with max-subtraction."""
    x = as_vec(logits)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input is not finite")
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    # summing in sorted order makes the result exactly permutation-equivariant
    return e / np.sort(e, axis=-1).sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    x = as_vec(logits)
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def solve_ols(design, targets, ridge: float = RIDGE_LAMBDA) -> np.ndarray:
    """Least-squares coefficients B (d x m) minimising ||X B - Y||^2 + ridge ||B||^2.

    One-hot regressors are collinear by construction, so the damped normal
    equations (X'X + ridge I) B = X'Y are solved. The solve goes through the
    thin SVD of X rather than forming X'X, which keeps the null-space
    component at machine precision instead of eps * cond(X'X). Singular
    values below the numerical rank threshold are treated as exact zeros.
    """
    X = as_vec(design)
    Y = as_vec(targets)
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionError(f"design and targets must be 2-D, got {X.shape} and {Y.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise DimensionError(f"empty design {X.shape}")
    if Y.shape[0] != n:
        raise DimensionError(f"design has {n} rows but targets have {Y.shape[0]}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    cutoff = np.finfo(np.float64).eps * max(n, d) * (s[0] if s.size else 0.0)
    shrink = np.where(s > cutoff, s / (s * s + ridge), 0.0)
    return Vt.T @ (shrink[:, None] * (U.T @ Y))


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.01

    @classmethod
    def zeros_like(cls, param, **hyper) -> "AdamState":
        p = as_vec(param)
        return cls(np.zeros_like(p), np.zeros_like(p), 0, **hyper)


def adam_step(param, grad, state: AdamState) -> tuple[np.ndarray, AdamState]:
    p = as_vec(param)
    g = as_vec(grad)
    if p.shape != g.shape or p.shape != state.first_moment.shape or p.shape != state.second_moment.shape:
        raise DimensionError(
            f"adam shapes differ: param {p.shape}, grad {g.shape}, "
            f"moments {state.first_moment.shape}/{state.second_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    step = state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    # entries with exactly zero gradient stay put (lazy update), so a zero
    # gradient is a no-op whatever the accumulated moments are
    new_p = np.where(g == 0.0, p, p - step)
    return new_p, replace(state, first_moment=m, second_moment=v, step_count=t)


def clip_by_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.sum(grad * grad)))
    if max_norm > 0 and norm > max_norm:
        return grad * (max_norm / norm), norm
    return grad, norm


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not h > 0:
        raise ValueError("step h must be positive")
    p = as_vec(params).ravel().copy()
    grad = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + h
        f_plus = float(loss_fn(p.copy()))
        p[i] = orig - h
        f_minus = float(loss_fn(p.copy()))
        p[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite loss while perturbing coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(a, b, floor: float = 1e-6) -> float:
    a = as_vec(a)
    b = as_vec(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
