"""Stacked LSTM next-action predictor with hand-written BPTT.

Gate blocks are stored stacked in the order (i, f, o, g): ``W`` is
(4H, in), ``U`` is (4H, H), ``b`` is (4H,). Sequences are processed in
batches of shape (B, T, F) with a (B, T) step mask, so sequences of
different lengths can share a batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DegenerateTrajectoryError, DimensionError, NumericError
from ..numerics import AdamState, adam_step, clip_by_norm, log_softmax, sigmoid, softmax

log = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
HIDDEN = 10
LAYERS = 2


@dataclass
class LSTMLayer:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_name, U_name, b_name) views for one gate."""
        k = GATES.index(name)
        H = self.hidden
        sl = slice(k * H, (k + 1) * H)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass
class LSTMParams:
    layers: list[LSTMLayer]
    Wy: np.ndarray  # (alphabet, hidden)
    by: np.ndarray  # (alphabet,)

    @property
    def feature_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def alphabet(self) -> int:
        return self.Wy.shape[0]

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.U, layer.b]
        return out + [self.Wy, self.by]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec) -> "LSTMParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.size:
            raise DimensionError(f"expected {self.size} parameters, got {vec.size}")
        pieces = []
        pos = 0
        for a in self.arrays():
            pieces.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        layers = [LSTMLayer(*pieces[3 * k : 3 * k + 3]) for k in range(len(self.layers))]
        return LSTMParams(layers, pieces[-2], pieces[-1])

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def zeros_like(self) -> "LSTMParams":
        return self.with_flat(np.zeros(self.size))


def init_lstm(feature_dim: int, alphabet: int, seed: int, hidden: int = HIDDEN, layers: int = LAYERS) -> LSTMParams:
    """Uniform(+-1/sqrt(fan_in)) weights, forget-gate bias 1, other biases 0."""
    if min(feature_dim, alphabet, hidden, layers) < 1:
        raise ConfigError("LSTM dimensions must all be >= 1")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    out = []
    in_dim = feature_dim
    for _ in range(layers):
        W = uniform((4 * hidden, in_dim), in_dim)
        U = uniform((4 * hidden, hidden), hidden)
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        out.append(LSTMLayer(W, U, b))
        in_dim = hidden
    return LSTMParams(out, uniform((alphabet, hidden), hidden), np.zeros(alphabet))


def lstm_cell(layer: LSTMLayer, x, state):
    """One step. Works on single vectors or (B, in) batches."""
    h, c = state
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.W.shape[1] or np.shape(h)[-1] != layer.hidden or np.shape(c)[-1] != layer.hidden:
        raise DimensionError(
            f"cell expects input {layer.W.shape[1]} and state {layer.hidden}, "
            f"got {x.shape[-1]}, {np.shape(h)[-1]}, {np.shape(c)[-1]}"
        )
    H = layer.hidden
    z = x @ layer.W.T + h @ layer.U.T + layer.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    o = sigmoid(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def _forward(params: LSTMParams, X: np.ndarray, keep_cache: bool):
    """Run a (B, T, F) batch. Returns logits (B, T, A) and a per-step cache."""
    B, T, F = X.shape
    if F != params.feature_dim:
        raise DimensionError(f"inputs have {F} features, model expects {params.feature_dim}")
    H = params.hidden
    L = len(params.layers)
    h = [np.zeros((B, H)) for _ in range(L)]
    c = [np.zeros((B, H)) for _ in range(L)]
    top = np.empty((B, T, H))
    logits = np.empty((B, T, params.alphabet))
    cache = [] if keep_cache else None
    for t in range(T):
        x = X[:, t, :]
        step = []
        for k, layer in enumerate(params.layers):
            z = _rowwise(x, layer.W.T) + _rowwise(h[k], layer.U.T) + layer.b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H : 2 * H])
            o = sigmoid(z[:, 2 * H : 3 * H])
            g = np.tanh(z[:, 3 * H :])
            c_new = f * c[k] + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            if keep_cache:
                step.append((x, h[k], c[k], i, f, o, g, tc))
            h[k], c[k] = h_new, c_new
            x = h_new
        top[:, t, :] = x
        # per step, so a prefix of a sequence gives bit-identical outputs
        logits[:, t, :] = _rowwise(x, params.Wy.T) + params.by
        if keep_cache:
            cache.append(step)
    return logits, top, cache, list(zip(h, c))


def lstm_forward(params: LSTMParams, inputs: Sequence) -> tuple[list[np.ndarray], list[tuple[np.ndarray, np.ndarray]]]:
    """Per-step next-action distributions for one sequence, from zero state.

    Returns the probability vectors and the final (h, c) of every layer.
    """
    if len(inputs) == 0:
        H = params.hidden
        return [], [(np.zeros(H), np.zeros(H)) for _ in params.layers]
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a list of feature vectors, got shape {X.shape}")
    logits, _, _, final = _forward(params, X[None], keep_cache=False)
    probs = softmax(logits[0])
    return list(probs), [(h[0], c[0]) for h, c in final]


def predict_batch(params: LSTMParams, X: np.ndarray) -> np.ndarray:
    logits, *_ = _forward(params, X, keep_cache=False)
    return softmax(logits)


def batch_loss_and_grad(params: LSTMParams, X, Y, mask=None) -> tuple[float, np.ndarray]:
    """Summed per-sequence loss and gradient over a batch.

    Each sequence contributes the mean cross-entropy over its unmasked
    steps, so the result is additive across sequences.
    Returns (loss, flat gradient).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    B, T, _ = X.shape
    if Y.shape[:2] != (B, T) or Y.shape[2] != params.alphabet:
        raise DimensionError(f"targets {Y.shape} do not match inputs {X.shape} / alphabet {params.alphabet}")
    mask = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=np.float64)
    lengths = mask.sum(axis=1)
    if np.any(lengths == 0):
        raise DegenerateTrajectoryError("a sequence in the batch has no target steps")
    weight = mask / lengths[:, None]

    logits, top, cache, _ = _forward(params, X, keep_cache=True)
    logp = log_softmax(logits)
    step_ce = -(Y * logp).sum(axis=2)
    if not np.all(np.isfinite(step_ce)):
        bad = np.argwhere(~np.isfinite(step_ce))[0]
        raise NumericError(f"non-finite loss at sequence {bad[0]}, step {bad[1]}")
    loss = float((step_ce * weight).sum())

    dlogits = (np.exp(logp) - Y) * weight[:, :, None]
    # weight gradients are summed over the batch axis explicitly (no BLAS
    # reduction), which keeps them exactly additive across sequences
    gWy = (dlogits[:, :, :, None] * top[:, :, None, :]).sum(axis=1).sum(axis=0)
    gby = dlogits.sum(axis=1).sum(axis=0)
    dtop = _rowwise(dlogits, params.Wy)  # (B, T, H)

    H = params.hidden
    L = len(params.layers)
    gW = [np.zeros_like(l.W) for l in params.layers]
    gU = [np.zeros_like(l.U) for l in params.layers]
    gb = [np.zeros_like(l.b) for l in params.layers]
    dh_next = [np.zeros((B, H)) for _ in range(L)]
    dc_next = [np.zeros((B, H)) for _ in range(L)]
    for t in range(T - 1, -1, -1):
        dh_from_above = dtop[:, t, :]
        for k in range(L - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, tc = cache[t][k]
            layer = params.layers[k]
            dh = dh_from_above + dh_next[k]
            dc = dh * o * (1.0 - tc * tc) + dc_next[k]
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ],
                axis=1,
            )
            gW[k] += _outer_sum(dz, x)
            gU[k] += _outer_sum(dz, h_prev)
            gb[k] += dz.sum(axis=0)
            dh_next[k] = _rowwise(dz, layer.U)
            dc_next[k] = dc * f
            dh_from_above = _rowwise(dz, layer.W)
    pieces = []
    for k in range(L):
        pieces += [gW[k].ravel(), gU[k].ravel(), gb[k]]
    pieces += [gWy.ravel(), gby]
    return loss, np.concatenate(pieces)


def _outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_n outer(a[n], b[n]) reduced in row order."""
    return (a[:, :, None] * b[:, None, :]).sum(axis=0)


def _rowwise(a: np.ndarray, M: np.ndarray) -> np.ndarray:
    """a @ M with a fixed reduction order whatever the batch size."""
    return (a[..., :, None] * M).sum(axis=-2)


def lstm_bptt(params: LSTMParams, sequence) -> tuple[LSTMParams, float]:
    """Gradient (shaped like params) and mean-per-step cross-entropy of one sequence."""
    if len(sequence.targets) == 0:
        raise DegenerateTrajectoryError(f"sequence {sequence.source!r} has no targets")
    loss, grad = batch_loss_and_grad(params, sequence.inputs[None], sequence.targets[None])
    return params.with_flat(grad), loss


# ------------------------------------------------------------------ training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    gradient_clip_norm: float = 5.0
    validation_fraction: float = 0.1
    early_stop_patience: int = 20
    hidden: int = HIDDEN
    layers: int = LAYERS

    def __post_init__(self):
        for name in ("epochs", "learning_rate", "batch_size", "gradient_clip_norm", "early_stop_patience", "hidden", "layers"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"TrainConfig.{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ConfigError(f"validation_fraction {self.validation_fraction} outside [0, 0.5]")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1

    def rows(self):
        return [
            {"epoch": e + 1, "train_loss": tr, "val_loss": va}
            for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss))
        ]


def stack_sequences(seqs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad sequences into (N, Tmax, F), (N, Tmax, A) arrays plus a step mask."""
    T = max(len(s) for s in seqs)
    F = seqs[0].inputs.shape[1]
    A = seqs[0].targets.shape[1]
    X = np.zeros((len(seqs), T, F))
    Y = np.zeros((len(seqs), T, A))
    M = np.zeros((len(seqs), T))
    for n, s in enumerate(seqs):
        if s.inputs.shape[1] != F or s.targets.shape[1] != A:
            raise DimensionError(f"sequence {s.source!r} has inconsistent feature/alphabet sizes")
        L = len(s)
        X[n, :L] = s.inputs
        Y[n, :L] = s.targets
        M[n, :L] = 1.0
    return X, Y, M


def validation_split(seqs, fraction: float, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Hold out whole source trajectories so perspective pairs stay together."""
    groups: dict[object, list[int]] = {}
    for n, s in enumerate(seqs):
        groups.setdefault((s.traj_index, s.source), []).append(n)
    keys = list(groups)
    n_val = int(round(fraction * len(keys)))
    if n_val == 0 or n_val >= len(keys):
        return list(range(len(seqs))), []
    order = rng.permutation(len(keys))
    val_keys = {keys[j] for j in order[:n_val]}
    train = [n for k in keys if k not in val_keys for n in groups[k]]
    val = [n for k in keys if k in val_keys for n in groups[k]]
    return sorted(train), sorted(val)


def mean_step_cross_entropy(params: LSTMParams, X, Y, M) -> float:
    logits, *_ = _forward(params, X, keep_cache=False)
    ce = -(Y * log_softmax(logits)).sum(axis=2)
    return float((ce * M).sum() / M.sum())


def train_lstm(seqs, config: TrainConfig = TrainConfig()) -> tuple[LSTMParams, TrainHistory]:
    """Mini-batch Adam with global-norm clipping and early stopping on
    held-out cross-entropy. Returns the best-validation parameters.

    Without a validation set (too few trajectories) the training loss is
    monitored instead.
    """
    seqs = list(seqs)
    if not seqs:
        raise ConfigError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    params = init_lstm(seqs[0].feature_dim, seqs[0].alphabet, config.seed, config.hidden, config.layers)
    X, Y, M = stack_sequences(seqs)
    train_idx, val_idx = validation_split(seqs, config.validation_fraction, rng)
    train_idx = np.asarray(train_idx)
    Xv, Yv, Mv = (X[val_idx], Y[val_idx], M[val_idx]) if val_idx else (None, None, None)

    theta = params.flat()
    adam = AdamState.zeros_like(theta, learning_rate=config.learning_rate)
    history = TrainHistory()
    best = (np.inf, theta.copy())
    since_best = 0
    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = np.sort(order[start : start + config.batch_size])
            try:
                loss, grad = batch_loss_and_grad(params, X[batch], Y[batch], M[batch])
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}: {exc}") from exc
            grad, _ = clip_by_norm(grad / len(batch), config.gradient_clip_norm)
            theta, adam = adam_step(theta, grad, adam)
            params = params.with_flat(theta)
            total += loss
        train_loss = total / len(order)
        if not np.isfinite(train_loss) or not np.all(np.isfinite(theta)):
            raise NumericError(f"training diverged at epoch {epoch + 1}")
        val_loss = mean_step_cross_entropy(params, Xv, Yv, Mv) if val_idx else None
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        monitored = val_loss if val_loss is not None else train_loss
        if monitored < best[0]:
            best = (monitored, theta.copy())
            history.best_epoch = epoch + 1
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                log.info("early stop at epoch %d (best %d)", epoch + 1, history.best_epoch)
                break
    history.stopped_epoch = len(history.train_loss)
    return params.with_flat(best[1]), history
