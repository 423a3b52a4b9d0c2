"""Loading behavioral trajectories and turning them into supervised
next-action sequences.

On-disk formats
---------------
IGT choices CSV
    Header row, one row per subject, one column per trial, cells 1..4 for
    decks A..D. An optional leading id column is recognised when its header
    is blank or one of ``subject``/``subj``/``id``, or when rows carry one
    more field than the header (R ``write.csv`` row names, as in the
    published many-labs IGT matrices). Optional win/loss matrices share the
    layout.
IPD canonical CSV
    Header ``traj_id,round,a1,a2[,R,S,T,P]``; actions ``C``/``D`` or 1/0
    with 1 = Cooperate.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateTrajectoryError,
    GameKindError,
    GapError,
    LengthError,
    ParseError,
)
from .games import (
    ALPHABETS,
    COOPERATE,
    DEFAULT_SPEC,
    DEFECT,
    IGT,
    IGT_ALPHABET,
    IPD,
    IPD_ALPHABET,
    GameSpec,
    Trajectory,
    ipd_payoff,
    require_valid,
)

log = logging.getLogger(__name__)

IPD_TRAJECTORY_LENGTH = 9
_ID_HEADERS = {"", "subject", "subj", "id", "subject_id"}


@dataclass(frozen=True)
class Dataset:
    game_kind: str
    trajectories: tuple[Trajectory, ...]
    alphabet: int
    horizon: int | None  # None while trajectory lengths still differ
    source_files: tuple[str, ...] = ()
    n_dropped: int = field(default=0, compare=False)

    def __len__(self) -> int:
        return len(self.trajectories)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return make_dataset(self.game_kind, [self.trajectories[i] for i in indices], self.source_files)


def make_dataset(game_kind: str, trajectories: Sequence[Trajectory], source_files=(), n_dropped=0) -> Dataset:
    if game_kind not in ALPHABETS:
        raise GameKindError(f"unknown game kind {game_kind!r}")
    for tr in trajectories:
        if tr.game_kind != game_kind:
            raise GameKindError(f"{tr.game_kind} trajectory in a {game_kind} dataset")
    lengths = {len(t) for t in trajectories}
    horizon = lengths.pop() if len(lengths) == 1 else None
    return Dataset(game_kind, tuple(trajectories), ALPHABETS[game_kind], horizon, tuple(source_files), n_dropped)


# ---------------------------------------------------------------- IGT files


def _read_matrix(path: Path, parse_cell):
    """Rows of (id or None, [values]) from a subject x trial matrix CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip().strip('"') for h in rows[0]]
    id_column = header[0].lower() in _ID_HEADERS
    out = []
    for r, row in enumerate(rows[1:], start=1):
        cells = [c.strip() for c in row]
        while cells and cells[-1] in ("", "NA"):
            cells.pop()
        if not cells:
            continue
        has_id = id_column or len(row) == len(header) + 1
        sid = cells[0] if has_id else None
        values = cells[1:] if has_id else cells
        parsed = []
        for c, cell in enumerate(values, start=1):
            try:
                parsed.append(parse_cell(cell))
            except ValueError:
                raise ParseError(f"{path}: bad cell {cell!r} at row {r}, col {c}") from None
        out.append((sid, parsed))
    return out


def _parse_deck(cell: str) -> int:
    value = float(cell)
    if value != int(value) or not 1 <= value <= IGT_ALPHABET:
        raise ValueError(cell)
    return int(value) - 1


def load_igt(choices_path, wins_path=None, losses_path=None) -> Dataset:
    """Subjects of one IGT study. Rows may differ in length; pool_and_truncate
    enforces a common horizon."""
    choices_path = Path(choices_path)
    if not choices_path.exists():
        raise FileNotFoundError(choices_path)
    rows = _read_matrix(choices_path, _parse_deck)
    wins = _read_matrix(Path(wins_path), float) if wins_path else None
    losses = _read_matrix(Path(losses_path), float) if losses_path else None
    for name, other in (("wins", wins), ("losses", losses)):
        if other is not None and len(other) != len(rows):
            raise ParseError(f"{name} matrix has {len(other)} rows, choices have {len(rows)}")

    trajectories = []
    for i, (sid, actions) in enumerate(rows):
        sid = sid if sid is not None else f"{choices_path.stem}_{i + 1}"
        w = tuple(wins[i][1][: len(actions)]) if wins else None
        lo = tuple(losses[i][1][: len(actions)]) if losses else None
        for name, seq in (("wins", w), ("losses", lo)):
            if seq is not None and len(seq) != len(actions):
                raise ParseError(f"{name} row {i + 1} is shorter than its choice row")
        rewards = None
        if w is not None and lo is not None:
            # published matrices store losses as negative amounts
            rewards = (tuple(a + b for a, b in zip(w, lo)),)
        trajectories.append(Trajectory(IGT, (tuple(actions),), rewards, w, lo, meta=(("id", sid),)))
    sources = [str(p) for p in (choices_path, wins_path, losses_path) if p]
    return make_dataset(IGT, trajectories, sources)


def pool_and_truncate(datasets: Sequence[Dataset], target_len: int) -> Dataset:
    kinds = {d.game_kind for d in datasets}
    if len(kinds) != 1:
        raise GameKindError(f"cannot pool datasets of kinds {sorted(kinds)}")
    pooled = [t for d in datasets for t in d.trajectories]
    short = [f"{t.source or '#' + str(i)} (length {len(t)})" for i, t in enumerate(pooled) if len(t) < target_len]
    if short:
        raise LengthError(f"{len(short)} trajectories shorter than {target_len}: " + ", ".join(short[:10]))
    sources = [s for d in datasets for s in d.source_files]
    return make_dataset(kinds.pop(), [t.truncated(target_len) for t in pooled], sources)


def save_igt(dataset: Dataset, choices_path, wins_path=None, losses_path=None) -> None:
    _require_kind(dataset, IGT)
    width = max((len(t) for t in dataset.trajectories), default=0)
    header = ["subject"] + [f"trial_{k + 1}" for k in range(width)]

    def write(path, cells_of):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(dataset.trajectories):
            w.writerow([t.source or f"s{i + 1}"] + list(cells_of(t)))
        atomic_write_text(path, buf.getvalue())

    write(choices_path, lambda t: [a + 1 for a in t.actions[0]])
    if wins_path:
        write(wins_path, lambda t: [_fmt(x) for x in (t.wins or ())])
    if losses_path:
        write(losses_path, lambda t: [_fmt(x) for x in (t.losses or ())])


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# ---------------------------------------------------------------- IPD files

_PAYOFF_COLS = ("R", "S", "T", "P")


def load_ipd(path, required_length: int = IPD_TRAJECTORY_LENGTH) -> Dataset:
    """Dyads from the canonical IPD CSV.

    Only trajectories with exactly `required_length` contiguous rounds are
    kept; the number dropped is logged and stored in ``n_dropped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        missing = {"traj_id", "round", "a1", "a2"} - set(fields)
        if missing:
            raise ParseError(f"{path}: missing columns {sorted(missing)}")
        has_payoffs = all(c in fields for c in _PAYOFF_COLS)
        groups: dict[str, dict[int, tuple]] = {}
        order: list[str] = []
        encoding = None
        for line, raw in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
            pair = []
            for col in ("a1", "a2"):
                value = row[col].upper()
                kind = "letter" if value in ("C", "D") else "digit" if value in ("0", "1") else None
                if kind is None:
                    raise ParseError(f"{path}: line {line}, column {col}: bad action {row[col]!r}")
                if encoding is None:
                    encoding = kind
                elif kind != encoding:
                    raise ParseError(f"{path}: line {line}: mixed action encodings (C/D and 1/0)")
                pair.append(COOPERATE if value in ("C", "1") else DEFECT)
            try:
                rnd = int(row["round"])
            except ValueError:
                raise ParseError(f"{path}: line {line}: bad round {row['round']!r}") from None
            spec = None
            if has_payoffs:
                try:
                    R, S, T, P = (float(row[c]) for c in _PAYOFF_COLS)
                except ValueError:
                    raise ParseError(f"{path}: line {line}: bad payoff value") from None
                spec = (R, S, T, P)
            tid = row["traj_id"]
            if tid not in groups:
                groups[tid] = {}
                order.append(tid)
            if rnd in groups[tid]:
                raise ParseError(f"{path}: line {line}: duplicate round {rnd} in trajectory {tid}")
            groups[tid][rnd] = (pair[0], pair[1], spec)

    trajectories = []
    dropped = 0
    for tid in sorted(order, key=_natural_key):
        rounds = groups[tid]
        length = max(rounds)
        if sorted(rounds) != list(range(1, length + 1)):
            absent = sorted(set(range(1, length + 1)) - set(rounds))
            raise GapError(f"{path}: trajectory {tid} is missing rounds {absent}")
        if length != required_length:
            dropped += 1
            continue
        payoff = rounds[1][2]
        spec = GameSpec(*payoff, horizon=length) if payoff else GameSpec(horizon=length)
        require_valid(spec)
        a1 = tuple(rounds[k][0] for k in range(1, length + 1))
        a2 = tuple(rounds[k][1] for k in range(1, length + 1))
        trajectories.append(_ipd_trajectory(a1, a2, spec, tid))
    if dropped:
        log.warning("%s: dropped %d trajectories whose length is not %d", path, dropped, required_length)
    return make_dataset(IPD, trajectories, [str(path)], n_dropped=dropped)


def _ipd_trajectory(a1, a2, spec: GameSpec, tid: str) -> Trajectory:
    pays = [ipd_payoff(spec, x, y) for x, y in zip(a1, a2)]
    rewards = (tuple(p[0] for p in pays), tuple(p[1] for p in pays))
    return Trajectory(IPD, (tuple(a1), tuple(a2)), rewards, spec=spec, meta=(("id", tid),))


def _natural_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def save_ipd(dataset: Dataset, path, with_payoffs: bool = True) -> None:
    _require_kind(dataset, IPD)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["traj_id", "round", "a1", "a2"] + (list(_PAYOFF_COLS) if with_payoffs else []))
    for i, t in enumerate(dataset.trajectories):
        tid = t.source or str(i + 1)
        spec = t.spec or DEFAULT_SPEC
        for k, (x, y) in enumerate(zip(*t.actions), start=1):
            row = [tid, k, "C" if x == COOPERATE else "D", "C" if y == COOPERATE else "D"]
            if with_payoffs:
                row += [_fmt(v) for v in (spec.R, spec.S, spec.T, spec.P)]
            w.writerow(row)
    atomic_write_text(path, buf.getvalue())


def canonical_csv(dataset: Dataset) -> str:
    """Choices (IGT) or dyad rows (IPD) in the canonical layout, as text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for i, t in enumerate(dataset.trajectories):
        spec = t.spec.payoffs() if t.spec else ()
        for agent, acts in enumerate(t.actions):
            w.writerow([t.source or i, agent, *spec, *acts])
    return buf.getvalue()


def dataset_hash(dataset: Dataset) -> str:
    return hashlib.sha256((dataset.game_kind + "\n" + canonical_csv(dataset)).encode()).hexdigest()


def manifest(dataset: Dataset, seed=None) -> dict:
    return {
        "game_kind": dataset.game_kind,
        "n_trajectories": len(dataset),
        "horizon": dataset.horizon,
        "alphabet": dataset.alphabet,
        "source_files": list(dataset.source_files),
        "seed": seed,
        "dataset_hash": dataset_hash(dataset),
    }


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require_kind(dataset: Dataset, kind: str) -> None:
    if dataset.game_kind != kind:
        raise GameKindError(f"expected a {kind} dataset, got {dataset.game_kind}")


# ------------------------------------------------------ supervised sequences


@dataclass(frozen=True)
class FeatureConfig:
    include_rewards: bool = False
    reward_scale: float = 0.01


DEFAULT_FEATURES = FeatureConfig()


@dataclass(frozen=True, eq=False)
class SupervisedSequence:
    """Teacher-forced view of one agent's trajectory.

    ``inputs[t]`` describes round t; ``targets[t]`` is the one-hot action of
    the focal agent at round t + 1.
    """

    inputs: np.ndarray  # (L - 1, feature_dim)
    targets: np.ndarray  # (L - 1, alphabet)
    focal_agent: int
    source: str
    traj_index: int = -1
    game_kind: str = IGT
    spec: GameSpec | None = None
    horizon: int = 0

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def feature_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def alphabet(self) -> int:
        return self.targets.shape[1]


def feature_dim(game_kind: str, config: FeatureConfig = DEFAULT_FEATURES) -> int:
    base = IGT_ALPHABET if game_kind == IGT else 2 * IPD_ALPHABET
    return base + (1 if config.include_rewards else 0)


def to_supervised(traj: Trajectory, config: FeatureConfig = DEFAULT_FEATURES, traj_index: int = -1) -> list[SupervisedSequence]:
    n = len(traj)
    if n < 2:
        raise DegenerateTrajectoryError(f"trajectory {traj.source!r} has {n} actions; need at least 2")
    if traj.game_kind == IGT:
        own = np.eye(IGT_ALPHABET)[list(traj.actions[0])]
        feats = [own[:-1]]
        if config.include_rewards:
            if traj.rewards is None:
                raise ConfigError(f"trajectory {traj.source!r} has no rewards to use as features")
            feats.append(np.asarray(traj.rewards[0][:-1], dtype=float)[:, None] * config.reward_scale)
        return [SupervisedSequence(np.hstack(feats), own[1:].copy(), 0, traj.source, traj_index, IGT, None, n)]

    if traj.game_kind != IPD:
        raise GameKindError(f"unknown game kind {traj.game_kind!r}")
    eye = np.eye(IPD_ALPHABET)
    out = []
    for focal in (0, 1):
        own = eye[list(traj.actions[focal])]
        opp = eye[list(traj.actions[1 - focal])]
        feats = [own[:-1], opp[:-1]]
        if config.include_rewards:
            if traj.rewards is None:
                raise ConfigError(f"trajectory {traj.source!r} has no rewards to use as features")
            feats.append(np.asarray(traj.rewards[focal][:-1], dtype=float)[:, None] * config.reward_scale)
        out.append(
            SupervisedSequence(np.hstack(feats), own[1:].copy(), focal, traj.source, traj_index, IPD, traj.spec, n)
        )
    return out


def supervised(dataset: Dataset, indices: Iterable[int] | None = None, config: FeatureConfig = DEFAULT_FEATURES) -> list[SupervisedSequence]:
    """All supervised sequences of the selected trajectories, in index order."""
    idx = range(len(dataset)) if indices is None else sorted(indices)
    return [s for i in idx for s in to_supervised(dataset.trajectories[i], config, traj_index=i)]


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class Split:
    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    fold: int = 0


def split_train_test(dataset: Dataset, ratio: float = 0.8, seed: int = 0) -> Split:
    """Shuffled split over trajectory indices.

    Splitting whole trajectories keeps both perspective sequences of an IPD
    dyad on the same side.
    """
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot split an empty dataset")
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"train ratio {ratio} outside (0, 1]")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    n_train = min(max(n_train, 1), n)
    return Split(tuple(sorted(int(i) for i in perm[:n_train])), tuple(sorted(int(i) for i in perm[n_train:])), seed)


def make_folds(dataset: Dataset, k: int, seed: int = 0) -> list[Split]:
    n = len(dataset)
    if not 2 <= k <= n:
        raise ConfigError(f"need 2 <= k <= {n} folds, got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = []
    for f, chunk in enumerate(np.array_split(perm, k)):
        test = set(int(i) for i in chunk)
        train = tuple(i for i in range(n) if i not in test)
        folds.append(Split(train, tuple(sorted(test)), seed, f))
    return folds
