"""Votes, datasets, sufficient statistics and the (n, r)-Birkhoff model.

Candidates are 0-based integers internally and 1-based in every text or JSON
format. A vote is a plain tuple of entries, one per position; an entry is a
candidate ``int`` or an :class:`ImproperSym` standing for ``plus1 + plus2 - minus``.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import NegativeCellError, PreconditionError

MAX_Z_CANDIDATES = 24


@dataclass(frozen=True)
class Config:
    n: int
    r: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n, int) and isinstance(self.r, int)):
            raise TypeError("n and r must be integers")
        if not 1 <= self.r <= self.n:
            raise ValueError(f"need 1 <= r <= n, got n={self.n}, r={self.r}")

    @property
    def num_votes(self) -> int:
        return math.perm(self.n, self.r)


@dataclass(frozen=True, order=True)
class ImproperSym:
    """The improper element ``plus1 + plus2 - minus`` (stored with plus1 < plus2)."""

    plus1: int
    plus2: int
    minus: int

    def __post_init__(self) -> None:
        if len({self.plus1, self.plus2, self.minus}) != 3:
            raise ValueError("improper element needs three distinct candidates")
        if self.plus1 > self.plus2:
            p1, p2 = self.plus2, self.plus1
            object.__setattr__(self, "plus1", p1)
            object.__setattr__(self, "plus2", p2)

    @property
    def pluses(self) -> tuple[int, int]:
        return (self.plus1, self.plus2)

    def other_plus(self, k: int) -> int:
        if k == self.plus1:
            return self.plus2
        if k == self.plus2:
            return self.plus1
        raise ValueError(f"{k} is not a positive part of {self}")

    def __str__(self) -> str:
        return f"{self.plus1 + 1}+{self.plus2 + 1}-{self.minus + 1}"


Entry = Union[int, ImproperSym]
Vote = tuple  # tuple[Entry, ...]


class VoteKind(enum.Enum):
    PROPER = "proper"
    IMPROPER = "improper"
    COLLISION = "collision"
    IMPROPER_WITH_COLLISION = "improper_with_collision"
    INVALID = "invalid"


class DatasetKind(enum.Enum):
    PROPER = "proper"
    IMPROPER = "improper"
    # a multiset of valid votes that is neither proper nor improper (collisions)
    INTERMEDIATE = "intermediate"
    INVALID = "invalid"


# ---------------------------------------------------------------------------
# entries and votes


def entry_terms(entry: Entry) -> dict[int, int]:
    if isinstance(entry, ImproperSym):
        return {entry.plus1: 1, entry.plus2: 1, entry.minus: -1}
    return {entry: 1}


def make_entry(terms: dict[int, int]) -> Entry | None:
    """Turn a formal sum of candidates back into an entry, or None if it is not one."""
    terms = {k: c for k, c in terms.items() if c}
    plus = [k for k, c in terms.items() if c == 1]
    minus = [k for k, c in terms.items() if c == -1]
    if len(plus) + len(minus) != len(terms):
        return None
    if len(plus) == 1 and not minus:
        return plus[0]
    if len(plus) == 2 and len(minus) == 1:
        return ImproperSym(plus[0], plus[1], minus[0])
    return None


def shift_entry(entry: Entry, gain: int, lose: int) -> Entry | None:
    """``entry + gain - lose`` as an entry, or None when not representable."""
    terms = entry_terms(entry)
    terms[gain] = terms.get(gain, 0) + 1
    terms[lose] = terms.get(lose, 0) - 1
    return make_entry(terms)


def column_sums(vote: Sequence[Entry]) -> Counter:
    sums: Counter = Counter()
    for e in vote:
        if isinstance(e, ImproperSym):
            sums[e.plus1] += 1
            sums[e.plus2] += 1
            sums[e.minus] -= 1
        else:
            sums[e] += 1
    return sums


def classify_vote(vote: Sequence[Entry]) -> VoteKind:
    """Classify a vote given in row-vector form."""
    n_improper = sum(isinstance(e, ImproperSym) for e in vote)
    if n_improper > 1:
        return VoteKind.INVALID
    sums = column_sums(vote).values()
    if any(s < 0 or s >= 3 for s in sums):
        return VoteKind.INVALID
    doubles = sum(s == 2 for s in sums)
    if doubles > 1:
        return VoteKind.INVALID
    if n_improper:
        return VoteKind.IMPROPER_WITH_COLLISION if doubles else VoteKind.IMPROPER
    return VoteKind.COLLISION if doubles else VoteKind.PROPER


def classify_matrix(mat: np.ndarray) -> VoteKind:
    """Classify an r x n integer matrix with entries in {-1, 0, 1}."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or not np.isin(mat, (-1, 0, 1)).all():
        return VoteKind.INVALID
    if not (mat.sum(axis=1) == 1).all():
        return VoteKind.INVALID
    negatives = int((mat == -1).sum())
    if negatives > 1:
        return VoteKind.INVALID
    cols = mat.sum(axis=0)
    if (cols < 0).any() or (cols >= 3).any():
        return VoteKind.INVALID
    doubles = int((cols == 2).sum())
    if doubles > 1:
        return VoteKind.INVALID
    if negatives:
        return VoteKind.IMPROPER_WITH_COLLISION if doubles else VoteKind.IMPROPER
    return VoteKind.COLLISION if doubles else VoteKind.PROPER


def vote_matrix(vote: Sequence[Entry], n: int) -> np.ndarray:
    mat = np.zeros((len(vote), n), dtype=np.int64)
    for j, e in enumerate(vote):
        for k, c in entry_terms(e).items():
            mat[j, k] += c
    return mat


def vote_from_matrix(mat: np.ndarray) -> Vote:
    entries = []
    for row in np.asarray(mat):
        entry = make_entry({int(k): int(c) for k, c in enumerate(row) if c})
        if entry is None:
            raise ValueError(f"row {row.tolist()} is not an entry")
        entries.append(entry)
    return tuple(entries)


def is_proper_vote(vote: Sequence[Entry]) -> bool:
    return all(isinstance(e, int) for e in vote) and len(set(vote)) == len(vote)


def entry_key(entry: Entry) -> tuple:
    if isinstance(entry, ImproperSym):
        return (1, entry.plus1, entry.plus2, entry.minus)
    return (0, entry)


def vote_key(vote: Sequence[Entry]) -> tuple:
    return tuple(entry_key(e) for e in vote)


def concurrence(u: Sequence[Entry], v: Sequence[Entry]) -> int:
    """Number of positions where the two votes hold the same candidate."""
    return sum(a == b for a, b in zip(u, v))


# ---------------------------------------------------------------------------
# the vote set and configuration matrix


@lru_cache(maxsize=None)
def _votes(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.permutations(range(n), r))


def enumerate_votes(config: Config) -> tuple[tuple[int, ...], ...]:
    """All injections [r] -> [n] in lexicographic order; this is the column order."""
    return _votes(config.n, config.r)


@lru_cache(maxsize=None)
def _vote_index(n: int, r: int) -> dict[tuple[int, ...], int]:
    return {v: i for i, v in enumerate(_votes(n, r))}


def vote_index(config: Config) -> dict[tuple[int, ...], int]:
    return _vote_index(config.n, config.r)


def config_matrix(config: Config) -> np.ndarray:
    """The (r*n) x |S_{n,r}| 0/1 matrix; row (j, k) is j*n + k."""
    n, r = config.n, config.r
    votes = enumerate_votes(config)
    A = np.zeros((r * n, len(votes)), dtype=np.int64)
    for col, v in enumerate(votes):
        for j, k in enumerate(v):
            A[j * n + k, col] = 1
    return A


# ---------------------------------------------------------------------------
# datasets and sufficient statistics


@dataclass(frozen=True)
class SuffStat:
    t: np.ndarray
    N: int

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=np.int64)
        if t.ndim != 2:
            raise ValueError("t must be an r x n matrix")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def r(self) -> int:
        return self.t.shape[0]

    @property
    def n(self) -> int:
        return self.t.shape[1]

    @property
    def config(self) -> Config:
        return Config(self.n, self.r)

    def key(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(x) for x in row) for row in self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SuffStat):
            return NotImplemented
        return self.N == other.N and self.t.shape == other.t.shape and bool((self.t == other.t).all())

    def __hash__(self) -> int:
        return hash((self.N, self.key()))

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "r": self.r, "N": self.N, "t": self.t.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SuffStat":
        obj = json.loads(text)
        stat = cls(np.array(obj["t"], dtype=np.int64), int(obj["N"]))
        if stat.r != obj.get("r", stat.r) or stat.n != obj.get("n", stat.n):
            raise ValueError("t does not match the declared n, r")
        if (stat.t < 0).any() or not (stat.t.sum(axis=1) == stat.N).all():
            raise ValueError("every position row of t must be nonnegative and sum to N")
        return stat


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered list of votes compared as a multiset."""

    votes: tuple
    config: Config
    _canon: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        votes = tuple(tuple(v) for v in self.votes)
        for v in votes:
            if len(v) != self.config.r:
                raise ValueError(f"vote {v} does not have length r={self.config.r}")
            for e in v:
                ks = (e,) if isinstance(e, int) else (e.plus1, e.plus2, e.minus)
                if any(not 0 <= k < self.config.n for k in ks):
                    raise ValueError(f"candidate out of range in vote {v}")
        object.__setattr__(self, "votes", votes)
        object.__setattr__(self, "_canon", tuple(sorted(votes, key=vote_key)))

    def __len__(self) -> int:
        return len(self.votes)

    def __getitem__(self, i: int) -> Vote:
        return self.votes[i]

    def __iter__(self):
        return iter(self.votes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.config == other.config and self._canon == other._canon

    def __hash__(self) -> int:
        return hash((self.config, self._canon))

    @property
    def N(self) -> int:
        return len(self.votes)

    def replace(self, updates: dict[int, Vote]) -> "Dataset":
        votes = list(self.votes)
        for i, v in updates.items():
            votes[i] = tuple(v)
        return Dataset(tuple(votes), self.config)

    def counts(self) -> Counter:
        return Counter(self.votes)

    def canonical(self) -> tuple:
        return self._canon

    def kind(self) -> DatasetKind:
        return dataset_kind(self)

    def improper_index(self) -> int | None:
        for i, v in enumerate(self.votes):
            if any(isinstance(e, ImproperSym) for e in v):
                return i
        return None

    def __str__(self) -> str:
        return format_dataset(self)


def dataset_kind(dataset: Dataset) -> DatasetKind:
    kinds = [classify_vote(v) for v in dataset.votes]
    if VoteKind.INVALID in kinds:
        return DatasetKind.INVALID
    n_improper = sum(k in (VoteKind.IMPROPER, VoteKind.IMPROPER_WITH_COLLISION) for k in kinds)
    if n_improper > 1:
        return DatasetKind.INVALID
    if n_improper and (_raw_stat(dataset) < 0).any():
        return DatasetKind.INVALID
    if all(k is VoteKind.PROPER for k in kinds):
        return DatasetKind.PROPER
    if n_improper == 1 and all(k in (VoteKind.PROPER, VoteKind.IMPROPER) for k in kinds):
        return DatasetKind.IMPROPER
    return DatasetKind.INTERMEDIATE


def _raw_stat(dataset: Dataset) -> np.ndarray:
    n, r = dataset.config.n, dataset.config.r
    t = np.zeros((r, n), dtype=np.int64)
    for v in dataset.votes:
        for j, e in enumerate(v):
            if isinstance(e, ImproperSym):
                t[j, e.plus1] += 1
                t[j, e.plus2] += 1
                t[j, e.minus] -= 1
            else:
                t[j, e] += 1
    return t


def suff_stat(dataset: Dataset) -> SuffStat:
    """Position-by-candidate counts; improper elements contribute +1, +1, -1."""
    t = _raw_stat(dataset)
    if (t < 0).any():
        j, k = map(int, np.argwhere(t < 0)[0])
        raise NegativeCellError(f"cell (position {j + 1}, candidate {k + 1}) is negative")
    return SuffStat(t, dataset.N)


def stat_key(votes: Iterable[Sequence[int]], n: int, r: int) -> tuple[int, ...]:
    """Flat sufficient statistic of proper votes, cheap enough for hot loops."""
    t = [0] * (r * n)
    for v in votes:
        for j, k in enumerate(v):
            t[j * n + k] += 1
    return tuple(t)


def frequency_vector(dataset: Dataset) -> np.ndarray:
    index = vote_index(dataset.config)
    x = np.zeros(dataset.config.num_votes, dtype=np.int64)
    for v in dataset.votes:
        if v not in index:
            raise PreconditionError(f"vote {format_vote(v)} is not proper")
        x[index[v]] += 1
    return x


def dataset_from_counts(counts: dict, config: Config) -> Dataset:
    votes = []
    for v in sorted(counts):
        votes.extend([v] * counts[v])
    return Dataset(tuple(votes), config)


# ---------------------------------------------------------------------------
# the probability model


@dataclass(frozen=True)
class ModelParams:
    """Positive weights psi[j, k]; each position row is rescaled to sum to one."""

    psi: np.ndarray

    def __post_init__(self) -> None:
        psi = np.array(self.psi, dtype=float)
        if psi.ndim != 2:
            raise ValueError("psi must be an r x n matrix")
        if not (psi > 0).all() or not np.isfinite(psi).all():
            raise ValueError("psi entries must be positive and finite")
        psi = psi / psi.sum(axis=1, keepdims=True)
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def uniform(cls, config: Config) -> "ModelParams":
        return cls(np.full((config.r, config.n), 1.0 / config.n))


def _check_params(params: ModelParams, config: Config) -> None:
    if params.psi.shape != (config.r, config.n):
        raise ValueError(f"psi has shape {params.psi.shape}, expected {(config.r, config.n)}")
    if config.n > MAX_Z_CANDIDATES:
        raise OverflowError(f"subset DP over {config.n} candidates is infeasible")


def _forward_layers(psi: np.ndarray) -> list[np.ndarray]:
    """F[j][S]: weight of injections of positions < j onto exactly the set S."""
    r, n = psi.shape
    size = 1 << n
    masks = np.arange(size)
    F = np.zeros(size)
    F[0] = 1.0
    layers = [F]
    for j in range(r):
        G = np.zeros(size)
        for k in range(n):
            bit = 1 << k
            src = masks[(masks & bit) == 0]
            G[src | bit] += F[src] * psi[j, k]
        layers.append(G)
        F = G
    return layers


def _backward_layers(psi: np.ndarray) -> list[np.ndarray]:
    """B[j][S]: weight of completing positions >= j given used set S."""
    r, n = psi.shape
    size = 1 << n
    masks = np.arange(size)
    B = np.ones(size)
    layers = [B]
    for j in range(r - 1, -1, -1):
        C = np.zeros(size)
        for k in range(n):
            bit = 1 << k
            src = masks[(masks & bit) == 0]
            C[src] += psi[j, k] * B[src | bit]
        layers.append(C)
        B = C
    layers.reverse()
    return layers


def compute_Z(params: ModelParams, config: Config) -> float:
    """Normalizing constant by dynamic programming over used-candidate subsets."""
    _check_params(params, config)
    return float(_forward_layers(params.psi)[-1].sum())


def position_marginals(params: ModelParams, config: Config) -> np.ndarray:
    """mu[j, k] = P(sigma(j) = k) under the model."""
    _check_params(params, config)
    psi = params.psi
    r, n = psi.shape
    F = _forward_layers(psi)
    B = _backward_layers(psi)
    Z = F[-1].sum()
    masks = np.arange(1 << n)
    mu = np.empty((r, n))
    for j in range(r):
        for k in range(n):
            bit = 1 << k
            src = masks[(masks & bit) == 0]
            mu[j, k] = psi[j, k] * (F[j][src] * B[j + 1][src | bit]).sum() / Z
    return mu


def vote_weight(vote: Sequence[int], params: ModelParams) -> float:
    return float(np.prod([params.psi[j, k] for j, k in enumerate(vote)]))


def vote_probability(vote: Sequence[int], params: ModelParams, config: Config) -> float:
    if not is_proper_vote(vote) or len(vote) != config.r:
        raise PreconditionError(f"vote {vote} is not a proper vote of length {config.r}")
    return vote_weight(vote, params) / compute_Z(params, config)


# ---------------------------------------------------------------------------
# text formats

_IMPROPER_TOKEN = re.compile(r"^(\d+)\+(\d+)-(\d+)$")
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def parse_entry(token: str) -> Entry:
    m = _IMPROPER_TOKEN.match(token)
    if m:
        p1, p2, mi = (int(g) - 1 for g in m.groups())
        return ImproperSym(p1, p2, mi)
    if token.isdigit() and int(token) >= 1:
        return int(token) - 1
    raise ValueError(f"bad vote entry {token!r}")


def format_entry(entry: Entry) -> str:
    return str(entry) if isinstance(entry, ImproperSym) else str(entry + 1)


def format_vote(vote: Sequence[Entry]) -> str:
    """Compact form used in move and basis files, e.g. ``(1,2,3)``."""
    return "(" + ",".join(format_entry(e) for e in vote) + ")"


def parse_vote(text: str) -> Vote:
    text = text.strip()
    if text.startswith("(") and text.endswith(")"):
        text = text[1:-1]
    return tuple(parse_entry(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok)


def letters(vote: Sequence[Entry]) -> str:
    """Human-friendly letter form, e.g. ``(a, b, b+c-a)``; for n <= 26."""
    def one(e: Entry) -> str:
        if isinstance(e, ImproperSym):
            return f"{_LETTERS[e.plus1]}+{_LETTERS[e.plus2]}-{_LETTERS[e.minus]}"
        return _LETTERS[e]
    return "(" + ", ".join(one(e) for e in vote) + ")"


def from_letters(rows: Iterable[str]) -> list[Vote]:
    """Parse rows such as ``"a b b+c-a"`` into 0-based votes."""
    out = []
    for row in rows:
        entries = []
        for tok in row.split():
            m = re.match(r"^([a-z])\+([a-z])-([a-z])$", tok)
            if m:
                entries.append(ImproperSym(*(_LETTERS.index(c) for c in m.groups())))
            elif len(tok) == 1 and tok in _LETTERS:
                entries.append(_LETTERS.index(tok))
            else:
                raise ValueError(f"bad letter token {tok!r}")
        out.append(tuple(entries))
    return out


_N_HEADER = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


def parse_dataset(text: str, n: int | None = None) -> Dataset:
    """One vote per line, 1-based entries separated by spaces.

    A ``# n=K`` comment line fixes the number of candidates; otherwise ``n``
    or the largest candidate seen is used.
    """
    votes = []
    for line in text.splitlines():
        line = line.strip()
        m = _N_HEADER.match(line)
        if m and n is None:
            n = int(m.group(1))
            continue
        if not line or line.startswith("#"):
            continue
        votes.append(tuple(parse_entry(tok) for tok in line.split()))
    if not votes:
        raise ValueError("dataset has no votes")
    r = len(votes[0])
    if any(len(v) != r for v in votes):
        raise ValueError("all votes must have the same length")
    if n is None:
        n = 1 + max(k for v in votes for e in v for k in entry_terms(e))
    return Dataset(tuple(votes), Config(n, r))


def format_dataset(dataset: Dataset, header: bool = False) -> str:
    head = f"# n={dataset.config.n}\n" if header else ""
    return head + "".join(" ".join(format_entry(e) for e in v) + "\n" for v in dataset.votes)
