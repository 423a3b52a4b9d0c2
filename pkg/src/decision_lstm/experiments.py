"""End-to-end runs shared by the CLI, the scripts and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import DEFAULT_FEATURES, Dataset, FeatureConfig, make_dataset, split_train_test, supervised
from .evaluation import EvalConfig, EvalReport, evaluate_sequences
from .games import DEFAULT_SPEC, IGT, IPD, GameSpec, SynthPolicy, igt_scheme, simulate_igt, simulate_ipd
from .numerics import finite_diff_grad, max_relative_error
from .predictors import TrainConfig, batch_loss_and_grad, fit_model, init_lstm

log = logging.getLogger(__name__)

GRADCHECK_TOL = 1e-4


def child_seeds(seed: int, n: int) -> list[int]:
    """Independent per-trajectory seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def simulate_igt_population(n: int, policy: SynthPolicy, scheme_id: int = 1, trials: int = 95, seed: int = 0,
                            schedule: str = "iid") -> Dataset:
    scheme = igt_scheme(scheme_id)
    trajs = [
        simulate_igt(policy, scheme, trials, s, meta=(("id", str(k + 1)),), schedule=schedule)
        for k, s in enumerate(child_seeds(seed, n))
    ]
    return make_dataset(IGT, trajs)


def simulate_ipd_population(
    n: int,
    mix: Sequence[SynthPolicy],
    spec: GameSpec = DEFAULT_SPEC,
    rounds: int = 9,
    seed: int = 0,
) -> Dataset:
    """Dyads whose two players are drawn uniformly (with replacement) from `mix`."""
    rng = np.random.default_rng(seed)
    pairs = rng.integers(len(mix), size=(n, 2))
    trajs = [
        simulate_ipd(mix[a], mix[b], spec, rounds, s, meta=(("id", str(k + 1)),))
        for k, ((a, b), s) in enumerate(zip(pairs, child_seeds(seed, n)))
    ]
    return make_dataset(IPD, trajs)


SYNTHETIC_IPD_MIX = (
    SynthPolicy("tit_for_tat"),
    SynthPolicy("grim_trigger"),
    SynthPolicy("always_defect", noise=0.2),
)


@dataclass
class Comparison:
    seed: int
    reports: dict[str, EvalReport] = field(default_factory=dict)

    def avg_mse(self) -> dict[str, float]:
        return {k: r.avg_mse for k, r in self.reports.items()}


def compare_models(
    dataset: Dataset,
    seed: int,
    kinds: Sequence[str] = ("lstm", "var", "logistic"),
    train_config: TrainConfig | None = None,
    lag: int = 1,
    l2: float = 1e-4,
    ratio: float = 0.8,
    features: FeatureConfig = DEFAULT_FEATURES,
    eval_config: EvalConfig = EvalConfig(),
) -> Comparison:
    """Fit each model kind on one 80/20 split and evaluate on its test side."""
    split = split_train_test(dataset, ratio, seed)
    train = supervised(dataset, split.train, features)
    test = supervised(dataset, split.test, features)
    config = train_config or TrainConfig(seed=seed)
    out = Comparison(seed)
    for kind in kinds:
        model, _ = fit_model(kind, train, config, lag=lag, l2=l2)
        out.reports[kind] = evaluate_sequences(model, test, dataset.game_kind, eval_config, seed=seed)
        log.info("seed %d %s avg_mse %.4f", seed, kind, out.reports[kind].avg_mse)
    return out


def gradcheck(seed: int, steps: int = 3, hidden: int = 10, feature_dim: int = 4, alphabet: int = 4,
              h: float = 1e-5, corrupt: bool = False) -> float:
    """Max relative error between BPTT and central differences on a random
    instance. `corrupt` perturbs one analytic entry (negative control)."""
    rng = np.random.default_rng(seed)
    params = init_lstm(feature_dim, alphabet, seed, hidden=hidden)
    # jitter all entries so biases and gates sit away from their init values
    params = params.with_flat(params.flat() + rng.normal(0.0, 0.3, params.size))
    X = np.eye(feature_dim)[rng.integers(feature_dim, size=steps)][None]
    Y = np.eye(alphabet)[rng.integers(alphabet, size=steps)][None]
    _, grad = batch_loss_and_grad(params, X, Y)
    if corrupt:
        grad = grad.copy()
        grad[int(np.argmax(np.abs(grad)))] *= 1.01
    numeric = finite_diff_grad(lambda v: batch_loss_and_grad(params.with_flat(v), X, Y)[0], params.flat(), h)
    return max_relative_error(grad, numeric)
