"""Moves, minimal Markov basis counts, and random move generation."""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import PreconditionError, TooLargeError, UnsupportedError
from .fiber import (
    FiberElement,
    canonical_columns,
    column_multisets,
    columns_to_stat,
    enumerate_fiber,
    labelings,
    low_degree_components,
)
from .model import Config, enumerate_votes, format_vote, parse_vote, stat_key

MAX_COMBINATIONS = 5_000_000


@dataclass(frozen=True)
class Move:
    """A sparse kernel vector, stored as sorted (vote, coefficient) pairs."""

    z: tuple

    @classmethod
    def from_map(cls, z: Mapping[tuple, int]) -> "Move":
        return cls(tuple(sorted((tuple(v), int(c)) for v, c in z.items() if c)))

    @classmethod
    def between(cls, x: Iterable[Sequence[int]], y: Iterable[Sequence[int]]) -> "Move":
        """The move y - x."""
        z: Counter = Counter(tuple(v) for v in y)
        z.subtract(Counter(tuple(v) for v in x))
        return cls.from_map(z)

    def as_dict(self) -> dict:
        return dict(self.z)

    @property
    def degree(self) -> int:
        return sum(c for _, c in self.z if c > 0)

    @property
    def positive(self) -> Counter:
        return Counter({v: c for v, c in self.z if c > 0})

    @property
    def negative(self) -> Counter:
        return Counter({v: -c for v, c in self.z if c < 0})

    def __neg__(self) -> "Move":
        return Move(tuple((v, -c) for v, c in self.z))

    def __bool__(self) -> bool:
        return bool(self.z)

    def canonical(self) -> "Move":
        """Sign-normalized so the smallest vote in the support is positive."""
        if self.z and self.z[0][1] < 0:
            return -self
        return self

    def apply(self, counts: Mapping[tuple, int]) -> Counter | None:
        """counts + z, or None if a cell would go negative."""
        out = Counter(counts)
        for v, c in self.z:
            out[v] += c
            if out[v] < 0:
                return None
        return +out

    def in_kernel(self, config: Config) -> bool:
        t = np.zeros((config.r, config.n), dtype=np.int64)
        for v, c in self.z:
            for j, k in enumerate(v):
                t[j, k] += c
        return not t.any()

    def __str__(self) -> str:
        plus = [f"+{format_vote(v)}" for v, c in self.z if c > 0 for _ in range(c)]
        minus = [f"-{format_vote(v)}" for v, c in self.z if c < 0 for _ in range(-c)]
        return " ".join(plus + minus)

    @classmethod
    def parse(cls, line: str) -> "Move":
        z: Counter = Counter()
        for tok in line.split():
            sign = 1 if tok[0] == "+" else -1 if tok[0] == "-" else None
            if sign is None:
                raise ValueError(f"move token must start with + or -: {tok!r}")
            z[parse_vote(tok[1:])] += sign
        return cls.from_map(z)


@dataclass(frozen=True)
class CountPolynomial:
    """sum of c * C(n, m) over the stored (m, c) pairs."""

    coefficients: tuple

    def __call__(self, n: int) -> int:
        return sum(c * math.comb(n, m) for m, c in self.coefficients)

    evaluate = __call__

    def __str__(self) -> str:
        return " + ".join(f"{c}*C(n,{m})" for m, c in self.coefficients) or "0"


# binomial-basis coefficients {m: c}
_FORMULAS = {
    (2, 2): {4: 6},
    (3, 2): {4: 18, 5: 270, 6: 270},
    (4, 2): {4: 18, 5: 960, 6: 10620, 7: 30240, 8: 17640},
    (5, 2): {5: 1050, 6: 40050, 7: 485100, 8: 2444400, 9: 3969000, 10: 1701000},
    (2, 3): {3: 1},
    (3, 3): {3: 1, 4: 156, 5: 210, 6: 60},
    (4, 3): {4: 160, 5: 28040, 6: 86660, 7: 102480, 8: 57120, 9: 10080},
    (5, 3): {5: 28840, 6: 6883200, 7: 36009400, 8: 83316800, 9: 107898000,
             10: 76104000, 11: 27720000, 12: 3696000},
}


def count_formula(r: int, degree: int) -> CountPolynomial:
    """Closed-form count of degree-2 or degree-3 moves in a minimal Markov basis."""
    if (r, degree) not in _FORMULAS:
        raise UnsupportedError(f"no closed form for r={r}, degree={degree}")
    return CountPolynomial(tuple(sorted(_FORMULAS[(r, degree)].items())))


def _check_degree(degree: int) -> None:
    if degree not in (2, 3):
        raise PreconditionError("degree must be 2 or 3")


def degree_fibers(config: Config, degree: int) -> list[list[FiberElement]]:
    """All fibers of ``degree``-vote datasets with at least two elements."""
    votes = enumerate_votes(config)
    total = math.comb(len(votes) + degree - 1, degree)
    if total > MAX_COMBINATIONS:
        raise TooLargeError(f"{total} vote multisets exceed {MAX_COMBINATIONS}")
    groups: dict[tuple, list[FiberElement]] = defaultdict(list)
    for combo in itertools.combinations_with_replacement(votes, degree):
        groups[stat_key(combo, config.n, config.r)].append(FiberElement(combo))
    return [g for _, g in sorted(groups.items()) if len(g) > 1]


def fiber_contribution(fiber: Sequence[FiberElement], degree: int) -> int:
    """Moves of this degree that a minimal basis needs for this fiber."""
    if degree == 2:
        # any two distinct two-vote elements already differ by a degree-2 move
        return len(fiber) - 1
    return len(low_degree_components(fiber, degree - 1)) - 1


def minimal_basis_counts(n: int, r: int, degree: int) -> int:
    """Brute force: sum the per-fiber contributions over every degree-vote fiber."""
    _check_degree(degree)
    if r > n:
        return 0  # no injections, so no fibers
    config = Config(n, r)
    return sum(fiber_contribution(f, degree) for f in degree_fibers(config, degree))


def derived_count_polynomial(r: int, degree: int) -> CountPolynomial:
    """Count polynomial rebuilt from the column-form classification."""
    _check_degree(degree)
    if r > 5:
        raise TooLargeError("derivation is limited to r <= 5 (r=5, degree 3 takes minutes)")
    coef: Counter = Counter()
    cache: dict[tuple, int] = {}
    for cols in column_multisets(r, degree):
        key = canonical_columns(cols)
        if key not in cache:
            fiber = enumerate_fiber(columns_to_stat(cols, degree))
            cache[key] = fiber_contribution(fiber, degree) if len(fiber) > 1 else 0
        if cache[key]:
            coef[len(cols)] += labelings(cols) * cache[key]
    return CountPolynomial(tuple(sorted(coef.items())))


def enumerate_basis_moves(n: int, r: int, max_degree: int = 3) -> set[Move]:
    """A Markov basis: spanning moves for every two- and three-vote fiber."""
    config = Config(n, r)
    moves: set[Move] = set()
    for degree in range(2, max_degree + 1):
        for fiber in degree_fibers(config, degree):
            if degree == 2:
                reps = list(fiber)
            else:
                reps = [fiber[c[0]] for c in low_degree_components(fiber, degree - 1)]
            for other in reps[1:]:
                moves.add(Move.between(reps[0].votes, other.votes).canonical())
    return moves


def all_low_degree_moves(config: Config, max_degree: int = 3) -> set[Move]:
    """Every nonzero kernel vector of degree at most ``max_degree`` (canonical sign)."""
    moves: set[Move] = set()
    for degree in range(2, max_degree + 1):
        for fiber in degree_fibers(config, degree):
            for x, y in itertools.combinations(fiber, 2):
                moves.add(Move.between(x.votes, y.votes).canonical())
    return moves


def random_move(rng: np.random.Generator, config: Config, degree: int) -> Move | None:
    """Draw ``degree`` uniform votes and shuffle each position among them.

    Returns None when the shuffle creates a collision or changes nothing.
    """
    _check_degree(degree)
    votes = enumerate_votes(config)
    start = [votes[i] for i in rng.integers(0, len(votes), size=degree)]
    return shuffle_move(rng, start)


def shuffle_move(rng: np.random.Generator, start: Sequence[tuple]) -> Move | None:
    """Permute each position uniformly among the given votes; None on collision or no change."""
    d = len(start)
    r = len(start[0])
    cols = [[start[i][j] for i in range(d)] for j in range(r)]
    for col in cols:
        rng.shuffle(col)
    new = [tuple(cols[j][i] for j in range(r)) for i in range(d)]
    if any(len(set(v)) < r for v in new):
        return None
    move = Move.between(start, new)
    return move if move else None


def extend_to_permutation(vote: Sequence[int], n: int) -> tuple:
    """Append the one missing candidate to a length n-1 vote."""
    missing = set(range(n)) - set(vote)
    if len(vote) != n - 1 or len(missing) != 1:
        raise PreconditionError("vote must have length n-1")
    return tuple(vote) + (missing.pop(),)

