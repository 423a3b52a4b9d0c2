"""Iowa Gambling Task payoff schemes, the two-player Prisoner's Dilemma, and
synthetic policies for generating trajectories.

Action encodings are fixed: IGT decks A, B, C, D -> 0, 1, 2, 3 and
IPD Defect -> 0, Cooperate -> 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EncodingError, SpecValidationError, UnknownSchemeError, ConfigError

IGT = "igt"
IPD = "ipd"

DECKS = "ABCD"
DECK_A, DECK_B, DECK_C, DECK_D = range(4)
GOOD_DECKS = (DECK_C, DECK_D)
IGT_ALPHABET = 4

DEFECT, COOPERATE = 0, 1
IPD_ALPHABET = 2

ALPHABETS = {IGT: IGT_ALPHABET, IPD: IPD_ALPHABET}


@dataclass(frozen=True)
class Deck:
    win_per_card: float
    loss_table: tuple[tuple[float, float], ...]  # (loss amount, probability)


@dataclass(frozen=True)
class IGTScheme:
    scheme_id: int
    decks: tuple[Deck, Deck, Deck, Deck]


_DECK_A = Deck(100.0, ((-150.0, 0.1), (-200.0, 0.1), (-250.0, 0.1), (-300.0, 0.1), (-350.0, 0.1)))
_DECK_B = Deck(100.0, ((-1250.0, 0.1),))
_DECK_D = Deck(50.0, ((-250.0, 0.1),))

_SCHEMES = {
    1: IGTScheme(1, (_DECK_A, _DECK_B, Deck(50.0, ((-25.0, 0.1), (-75.0, 0.1), (-50.0, 0.3))), _DECK_D)),
    2: IGTScheme(2, (_DECK_A, _DECK_B, Deck(50.0, ((-50.0, 0.5),)), _DECK_D)),
}


def igt_scheme(scheme_id: int) -> IGTScheme:
    try:
        return _SCHEMES[int(scheme_id)]
    except (KeyError, ValueError, TypeError):
        raise UnknownSchemeError(f"unknown IGT payoff scheme {scheme_id!r}; expected 1 or 2") from None


def _check_deck(deck: int) -> int:
    if not 0 <= int(deck) < IGT_ALPHABET:
        raise EncodingError(f"deck index {deck} outside [0, {IGT_ALPHABET})")
    return int(deck)


def igt_expected_value(scheme: IGTScheme, deck: int) -> float:
    d = scheme.decks[_check_deck(deck)]
    return d.win_per_card + sum(loss * p for loss, p in d.loss_table)


def igt_draw(scheme: IGTScheme, deck: int, rng: np.random.Generator) -> tuple[float, float, float]:
    """One card: (win, loss, combined). Loss is drawn i.i.d. from the table."""
    d = scheme.decks[_check_deck(deck)]
    u = rng.random()
    loss = 0.0
    acc = 0.0
    for amount, p in d.loss_table:
        acc += p
        if u < acc:
            loss = amount
            break
    return d.win_per_card, loss, d.win_per_card + loss


BLOCK = 10


def _block_losses(deck: Deck) -> np.ndarray:
    """The losses of one block of BLOCK cards, in table order."""
    cells = []
    for amount, p in deck.loss_table:
        count = round(p * BLOCK)
        if abs(count - p * BLOCK) > 1e-9:
            raise ConfigError(f"loss probability {p} is not a multiple of 1/{BLOCK}")
        cells += [amount] * count
    return np.array(cells + [0.0] * (BLOCK - len(cells)))


class DeckStream:
    """Cards from one deck, dealt in shuffled blocks of ten.

    Every block holds exactly the losses of the table, so the net outcome
    of each block of ten cards equals ten times the expected value.
    """

    def __init__(self, scheme: IGTScheme, deck: int, rng: np.random.Generator):
        self.deck = scheme.decks[_check_deck(deck)]
        self.rng = rng
        self._losses = _block_losses(self.deck)
        self._queue: list[float] = []

    def draw(self) -> tuple[float, float, float]:
        if not self._queue:
            self._queue = list(self.rng.permutation(self._losses))
        loss = float(self._queue.pop())
        win = self.deck.win_per_card
        return win, loss, win + loss


@dataclass(frozen=True)
class GameSpec:
    R: float = 3.0
    S: float = 0.0
    T: float = 5.0
    P: float = 1.0
    horizon: int = 9
    n_agents: int = 2

    def payoffs(self) -> tuple[float, float, float, float]:
        return self.R, self.S, self.T, self.P


DEFAULT_SPEC = GameSpec()


def validate_spec(spec: GameSpec) -> list[str]:
    """Names of the violated payoff inequalities; empty when the spec is valid."""
    R, S, T, P = spec.payoffs()
    violations = []
    if not T > R:
        violations.append(f"T > R ({T:g} <= {R:g})")
    if not R > P:
        violations.append(f"R > P ({R:g} <= {P:g})")
    if not P > S:
        violations.append(f"P > S ({P:g} <= {S:g})")
    if not 2 * R > T + S:
        violations.append(f"2R > T + S ({2 * R:g} <= {T + S:g})")
    if spec.n_agents != 2:
        violations.append(f"n_agents == 2 (got {spec.n_agents})")
    return violations


def require_valid(spec: GameSpec) -> GameSpec:
    violations = validate_spec(spec)
    if violations:
        raise SpecValidationError(violations)
    return spec


def ipd_payoff(spec: GameSpec, a1: int, a2: int) -> tuple[float, float]:
    require_valid(spec)
    for a in (a1, a2):
        if a not in (DEFECT, COOPERATE):
            raise EncodingError(f"IPD action {a} is neither 0 (D) nor 1 (C)")
    if a1 == COOPERATE and a2 == COOPERATE:
        return spec.R, spec.R
    if a1 == DEFECT and a2 == DEFECT:
        return spec.P, spec.P
    if a1 == COOPERATE:
        return spec.S, spec.T
    return spec.T, spec.S


def encode_one_hot(action: int, alphabet: int) -> np.ndarray:
    if not 0 <= int(action) < alphabet:
        raise EncodingError(f"action {action} outside alphabet of size {alphabet}")
    v = np.zeros(alphabet)
    v[int(action)] = 1.0
    return v


def decode_one_hot(vec) -> int:
    v = np.asarray(vec)
    if v.ndim != 1 or v.size == 0 or not np.all((v == 0) | (v == 1)) or v.sum() != 1:
        raise EncodingError(f"not a one-hot vector: {v!r}")
    return int(np.argmax(v))


@dataclass(frozen=True)
class Trajectory:
    """One subject (IGT) or dyad (IPD).

    `actions` holds one tuple per agent; `rewards`, when present, one tuple
    of combined rewards per agent. IGT trajectories may also carry the
    separate `wins` and `losses`.
    """

    game_kind: str
    actions: tuple[tuple[int, ...], ...]
    rewards: tuple[tuple[float, ...], ...] | None = None
    wins: tuple[float, ...] | None = None
    losses: tuple[float, ...] | None = None
    spec: GameSpec | None = None
    meta: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        lengths = {len(a) for a in self.actions}
        if len(lengths) > 1:
            raise EncodingError(f"agents have unequal action counts {sorted(lengths)}")
        if self.rewards is not None and any(len(r) != len(self) for r in self.rewards):
            raise EncodingError("reward sequence length differs from action length")

    def __len__(self) -> int:
        return len(self.actions[0]) if self.actions else 0

    @property
    def n_agents(self) -> int:
        return len(self.actions)

    @property
    def source(self) -> str:
        return dict(self.meta).get("id", "")

    def truncated(self, n: int) -> "Trajectory":
        def cut(seq):
            return None if seq is None else tuple(seq[:n])

        return Trajectory(
            self.game_kind,
            tuple(tuple(a[:n]) for a in self.actions),
            None if self.rewards is None else tuple(tuple(r[:n]) for r in self.rewards),
            cut(self.wins),
            cut(self.losses),
            self.spec,
            self.meta,
        )


POLICY_KINDS = (
    "random",
    "tit_for_tat",
    "always_defect",
    "always_cooperate",
    "grim_trigger",
    "win_stay_lose_shift",
    "epsilon_greedy_igt",
)


@dataclass(frozen=True)
class SynthPolicy:
    """A scripted player.

    `epsilon` is the exploration rate of epsilon_greedy_igt. `noise` flips the
    chosen IPD action (or re-draws an IGT deck uniformly) with that probability.
    """

    kind: str
    epsilon: float = 0.1
    noise: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}; choose from {', '.join(POLICY_KINDS)}")
        for name in ("epsilon", "noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"policy {name}={value} outside [0, 1]")


def synth_step(
    policy: SynthPolicy,
    own_history: Sequence[int],
    opp_history: Sequence[int],
    rng: np.random.Generator,
    rewards: Sequence[float] = (),
    game: str = IPD,
) -> int:
    """Next action of `policy`.

    `rewards` (combined reward per past choice) is only read by
    epsilon_greedy_igt. For IGT play pass ``game="igt"`` and an empty
    opponent history.
    """
    kind = policy.kind
    if game == IGT or kind == "epsilon_greedy_igt":
        if opp_history:
            raise ConfigError("IGT has no opponent; opp_history must be empty")
        if kind == "random":
            action = int(rng.integers(IGT_ALPHABET))
        elif kind == "epsilon_greedy_igt":
            action = _epsilon_greedy(policy, own_history, rewards, rng)
        else:
            raise ConfigError(f"policy {kind!r} cannot play the IGT")
        if policy.noise > 0.0 and rng.random() < policy.noise:
            action = int(rng.integers(IGT_ALPHABET))
        return action
    if len(own_history) != len(opp_history):
        raise ConfigError("IPD histories must have equal length")

    if kind == "random":
        action = int(rng.integers(IPD_ALPHABET))
    elif kind == "always_defect":
        action = DEFECT
    elif kind == "always_cooperate":
        action = COOPERATE
    elif kind == "tit_for_tat":
        action = opp_history[-1] if opp_history else COOPERATE
    elif kind == "grim_trigger":
        action = DEFECT if DEFECT in opp_history else COOPERATE
    else:  # win_stay_lose_shift
        if not own_history:
            action = COOPERATE
        else:
            # T or R is received exactly when the opponent cooperated
            won = opp_history[-1] == COOPERATE
            action = own_history[-1] if won else 1 - own_history[-1]
    if policy.noise > 0.0 and rng.random() < policy.noise:
        action = 1 - action
    return action


def _epsilon_greedy(policy, own_history, rewards, rng) -> int:
    if len(rewards) != len(own_history):
        raise ConfigError("epsilon_greedy_igt needs one reward per past choice")
    explore = rng.random() < policy.epsilon
    if explore or not own_history:
        return int(rng.integers(IGT_ALPHABET))
    totals = np.zeros(IGT_ALPHABET)
    counts = np.zeros(IGT_ALPHABET)
    for a, r in zip(own_history, rewards):
        totals[a] += r
        counts[a] += 1
    # unvisited decks are valued optimistically so each gets tried
    means = np.where(counts > 0, totals / np.maximum(counts, 1), np.inf)
    return int(np.argmax(means))


SCHEDULES = ("iid", "block")


def simulate_igt(policy: SynthPolicy, scheme: IGTScheme, horizon: int, seed: int, meta=(), schedule: str = "iid") -> Trajectory:
    """One simulated subject. `schedule` picks i.i.d. losses per card or
    shuffled ten-card blocks (see DeckStream)."""
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if schedule not in SCHEDULES:
        raise ConfigError(f"unknown loss schedule {schedule!r}; choose from {', '.join(SCHEDULES)}")
    rng = np.random.default_rng(seed)
    if schedule == "block":
        streams = [DeckStream(scheme, d, rng).draw for d in range(IGT_ALPHABET)]
    else:
        streams = [lambda d=d: igt_draw(scheme, d, rng) for d in range(IGT_ALPHABET)]
    actions: list[int] = []
    wins: list[float] = []
    losses: list[float] = []
    combined: list[float] = []
    for _ in range(horizon):
        deck = synth_step(policy, actions, (), rng, rewards=combined, game=IGT)
        win, loss, total = streams[deck]()
        actions.append(deck)
        wins.append(win)
        losses.append(loss)
        combined.append(total)
    return Trajectory(
        IGT,
        (tuple(actions),),
        rewards=(tuple(combined),),
        wins=tuple(wins),
        losses=tuple(losses),
        meta=tuple(meta) + (("scheme", str(scheme.scheme_id)),),
    )


def simulate_ipd(p1: SynthPolicy, p2: SynthPolicy, spec: GameSpec, horizon: int, seed: int, meta=()) -> Trajectory:
    require_valid(spec)
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if "epsilon_greedy_igt" in (p1.kind, p2.kind):
        raise ConfigError("epsilon_greedy_igt cannot play the IPD")
    rng = np.random.default_rng(seed)
    h1: list[int] = []
    h2: list[int] = []
    r1: list[float] = []
    r2: list[float] = []
    for _ in range(horizon):
        a1 = synth_step(p1, h1, h2, rng)
        a2 = synth_step(p2, h2, h1, rng)
        x, y = ipd_payoff(spec, a1, a2)
        h1.append(a1)
        h2.append(a2)
        r1.append(x)
        r2.append(y)
    return Trajectory(
        IPD,
        (tuple(h1), tuple(h2)),
        rewards=(tuple(r1), tuple(r2)),
        spec=spec,
        meta=tuple(meta) + (("p1", p1.kind), ("p2", p2.kind)),
    )
