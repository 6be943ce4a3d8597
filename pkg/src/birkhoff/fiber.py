"""Brute-force fiber machinery.

A fiber element is a multiset of proper votes (a frequency vector). Fibers of
two- and three-vote sufficient statistics are small enough to enumerate
outright, which is what the move counts and the equivalence-class tables are
built on.

Equivalence classes of sufficient statistics are enumerated through their
column form: a statistic over candidate set [m] is an r x m count matrix, and
relabeling candidates permutes its columns. A multiset of column vectors is
therefore exactly one relabeling orbit, and the orbit under position
permutations as well is found by minimizing over row permutations.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np

from .errors import PreconditionError, TooLargeError
from .model import Config, Dataset, SuffStat, dataset_from_counts

MAX_FIBER_SLOTS = 30


@dataclass(frozen=True, order=True)
class FiberElement:
    """A frequency vector, stored as the sorted tuple of its votes."""

    votes: tuple

    @classmethod
    def of(cls, votes: Iterable[Sequence[int]]) -> "FiberElement":
        return cls(tuple(sorted(tuple(v) for v in votes)))

    @property
    def N(self) -> int:
        return len(self.votes)

    def counts(self) -> Counter:
        return Counter(self.votes)

    def dataset(self, config: Config) -> Dataset:
        return dataset_from_counts(self.counts(), config)


def common_votes(x: FiberElement, y: FiberElement) -> int:
    """Size of the multiset intersection of two elements."""
    return sum((x.counts() & y.counts()).values())


def move_degree(x: FiberElement, y: FiberElement) -> int:
    """Degree of the move y - x: the positive-part mass."""
    return x.N - common_votes(x, y)


# ---------------------------------------------------------------------------
# fiber enumeration


def enumerate_fiber(t: SuffStat) -> list[FiberElement]:
    """Every multiset of proper votes with sufficient statistic ``t``, sorted."""
    if (t.t < 0).any():
        raise PreconditionError("sufficient statistic has a negative cell")
    if not (t.t.sum(axis=1) == t.N).all():
        raise PreconditionError("every position row must sum to N")
    if t.N * t.r > MAX_FIBER_SLOTS:
        raise TooLargeError(f"N*r = {t.N * t.r} exceeds {MAX_FIBER_SLOTS}")
    return list(_fiber(t.key(), t.N))


def iter_fiber(rem: list[list[int]], N: int) -> Iterator[tuple]:
    """Yield sorted vote tuples exhausting ``rem`` (an r x n count table, mutated in place)."""
    r = len(rem)
    n = len(rem[0]) if r else 0
    colsum = [sum(rem[j][k] for j in range(r)) for k in range(n)]
    chosen: list[tuple[int, ...]] = []

    def build_vote(j: int, prefix: list[int], used: int, tight: bool, prev: tuple | None):
        if j == r:
            yield tuple(prefix)
            return
        lo = prev[j] if (tight and prev is not None) else 0
        row = rem[j]
        for k in range(lo, n):
            if row[k] == 0 or used >> k & 1:
                continue
            prefix.append(k)
            yield from build_vote(j + 1, prefix, used | 1 << k, tight and k == lo, prev)
            prefix.pop()

    def place(slot: int):
        if slot == N:
            yield tuple(chosen)
            return
        left = N - slot - 1
        prev = chosen[-1] if chosen else None
        for vote in build_vote(0, [], 0, prev is not None, prev):
            for j, k in enumerate(vote):
                rem[j][k] -= 1
                colsum[k] -= 1
            if all(c <= left for c in colsum):
                chosen.append(vote)
                yield from place(slot + 1)
                chosen.pop()
            for j, k in enumerate(vote):
                rem[j][k] += 1
                colsum[k] += 1

    yield from place(0)


@lru_cache(maxsize=4096)
def _fiber_cached(key: tuple, N: int) -> tuple:
    rem = [list(row) for row in key]
    return tuple(FiberElement(votes) for votes in iter_fiber(rem, N))


def _fiber(key: tuple, N: int) -> tuple:
    return _fiber_cached(key, N)


def fiber_of(dataset: Dataset) -> list[FiberElement]:
    from .model import suff_stat

    return enumerate_fiber(suff_stat(dataset))


# ---------------------------------------------------------------------------
# block statistics and G_M


@dataclass(frozen=True)
class BlockStat:
    """Per-position candidate multisets (each block a sorted tuple)."""

    blocks: tuple

    def __post_init__(self) -> None:
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        sizes = {len(b) for b in blocks}
        if len(sizes) > 1:
            raise ValueError("all blocks must have the same size N")
        N = sizes.pop() if sizes else 0
        totals = Counter(k for b in blocks for k in b)
        if any(c > N for c in totals.values()):
            raise ValueError("a candidate appears more than N times")
        object.__setattr__(self, "blocks", blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def N(self) -> int:
        return len(self.blocks[0]) if self.blocks else 0

    @property
    def candidates(self) -> set[int]:
        return {k for b in self.blocks for k in b}

    def to_stat(self, n: int | None = None) -> SuffStat:
        n = n if n is not None else 1 + max(self.candidates)
        t = np.zeros((self.r, n), dtype=np.int64)
        for j, b in enumerate(self.blocks):
            for k in b:
                t[j, k] += 1
        return SuffStat(t, self.N)

    @classmethod
    def from_stat(cls, t: SuffStat) -> "BlockStat":
        return cls(tuple(tuple(k for k in range(t.n) for _ in range(int(t.t[j, k]))) for j in range(t.r)))


@dataclass(frozen=True)
class BlockGraph:
    r: int
    edges: frozenset
    components: tuple
    L: int

    @property
    def connected(self) -> bool:
        return len(self.components) == 1


def block_graph(M: BlockStat) -> BlockGraph:
    """Positions joined when their blocks share a candidate.

    ``L`` counts components, leaving out isolated blocks of one repeated
    candidate; those never distinguish votes.
    """
    g = nx.Graph()
    g.add_nodes_from(range(M.r))
    sets = [set(b) for b in M.blocks]
    edges = set()
    for j, jj in itertools.combinations(range(M.r), 2):
        if sets[j] & sets[jj]:
            edges.add((j, jj))
            g.add_edge(j, jj)
    comps = tuple(sorted(tuple(sorted(c)) for c in nx.connected_components(g)))
    L = sum(1 for c in comps if not (len(c) == 1 and len(sets[c[0]]) == 1))
    return BlockGraph(M.r, frozenset(edges), comps, L)


# ---------------------------------------------------------------------------
# fiber graphs


def fiber_graph(fiber: Sequence[FiberElement], move_degree_bound: int) -> tuple[nx.Graph, int]:
    """Join elements whose difference is a move of degree <= bound."""
    g = nx.Graph()
    g.add_nodes_from(range(len(fiber)))
    for a, b in itertools.combinations(range(len(fiber)), 2):
        if move_degree(fiber[a], fiber[b]) <= move_degree_bound:
            g.add_edge(a, b)
    return g, nx.number_connected_components(g)


def low_degree_components(fiber: Sequence[FiberElement], bound: int) -> list[list[int]]:
    """Components of the degree-<=bound fiber graph, each a sorted index list."""
    parent = list(range(len(fiber)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    counts = [f.counts() for f in fiber]
    N = fiber[0].N if fiber else 0
    for a, b in itertools.combinations(range(len(fiber)), 2):
        if N - sum((counts[a] & counts[b]).values()) <= bound:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for a in range(len(fiber)):
        groups.setdefault(find(a), []).append(a)
    return sorted(groups.values())


def fiber_graph_moves(fiber: Sequence[FiberElement], moves: Iterable[dict]) -> tuple[nx.Graph, int]:
    """Join x and x + z for every move z (either sign) that keeps x nonnegative."""
    index = {f: i for i, f in enumerate(fiber)}
    move_list = [dict(m) for m in moves]
    g = nx.Graph()
    g.add_nodes_from(range(len(fiber)))
    for i, x in enumerate(fiber):
        cx = x.counts()
        for z in move_list:
            for sign in (1, -1):
                y = Counter(cx)
                ok = True
                for v, c in z.items():
                    y[v] += sign * c
                    if y[v] < 0:
                        ok = False
                        break
                if not ok:
                    continue
                target = FiberElement.of(v for v, c in y.items() for _ in range(c))
                if target in index:
                    g.add_edge(i, index[target])
    return g, nx.number_connected_components(g)


# ---------------------------------------------------------------------------
# column form and equivalence classes


def _columns(r: int, N: int) -> list[tuple[int, ...]]:
    cols = [c for c in itertools.product(range(N + 1), repeat=r) if 1 <= sum(c) <= N]
    cols.sort(reverse=True)
    return cols


def column_multisets(r: int, N: int, max_labels: int | None = None) -> Iterator[tuple]:
    """Every multiset of columns whose rows each sum to N (one relabeling orbit each)."""
    cols = _columns(r, N)
    rem = [N] * r
    chosen: list[tuple[int, ...]] = []

    def rec(start: int):
        if not any(rem):
            yield tuple(chosen)
            return
        if max_labels is not None and len(chosen) >= max_labels:
            return
        # the first row still needing mass must be covered by some later column
        for idx in range(start, len(cols)):
            c = cols[idx]
            if any(ci > ri for ci, ri in zip(c, rem)):
                continue
            for j in range(r):
                rem[j] -= c[j]
            chosen.append(c)
            yield from rec(idx)
            chosen.pop()
            for j in range(r):
                rem[j] += c[j]

    yield from rec(0)


def columns_to_stat(cols: Sequence[tuple[int, ...]], N: int) -> SuffStat:
    t = np.array(cols, dtype=np.int64).T.reshape(len(cols[0]), len(cols))
    return SuffStat(t, N)


def columns_connected(cols: Sequence[tuple[int, ...]], r: int) -> bool:
    parent = list(range(r))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for c in cols:
        rows = [j for j in range(r) if c[j]]
        for j in rows[1:]:
            parent[find(j)] = find(rows[0])
    return len({find(j) for j in range(r)}) == 1


def labelings(cols: Sequence[tuple[int, ...]]) -> int:
    """Distinct statistics on a fixed label set of size len(cols) with these columns."""
    out = math.factorial(len(cols))
    for m in Counter(cols).values():
        out //= math.factorial(m)
    return out


def canonical_columns(cols: Sequence[tuple[int, ...]]) -> tuple:
    r = len(cols[0])
    return min(tuple(sorted((tuple(c[p] for p in perm) for c in cols), reverse=True))
               for perm in itertools.permutations(range(r)))


def position_orbit(cols: Sequence[tuple[int, ...]]) -> set[tuple]:
    r = len(cols[0])
    return {tuple(sorted((tuple(c[p] for p in perm) for c in cols), reverse=True))
            for perm in itertools.permutations(range(r))}


@dataclass(frozen=True)
class FiberSummary:
    size: int
    components: int
    component_sizes: tuple

    @property
    def needs_degree3(self) -> bool:
        return self.components >= 2

    @property
    def indispensable(self) -> bool:
        # the degree-3 move is forced exactly when the fiber is two lone elements
        return self.components == 2 and self.size == 2


def summarize_fiber(stat: SuffStat) -> FiberSummary:
    fiber = enumerate_fiber(stat)
    comps = low_degree_components(fiber, stat.N - 1)
    return FiberSummary(len(fiber), len(comps), tuple(sorted(len(c) for c in comps)))


@dataclass(frozen=True)
class EquivClass:
    representative: BlockStat
    r: int
    N: int
    n_M: int
    size: int
    fiber_size: int
    N_M: int
    connected: bool
    needs_degree3: bool
    indispensable: bool


def _cols_to_blocks(cols: Sequence[tuple[int, ...]]) -> BlockStat:
    r = len(cols[0])
    return BlockStat(tuple(tuple(k for k, c in enumerate(cols) for _ in range(c[j])) for j in range(r)))


def classify_equiv(r: int, N: int = 3, n_M: Iterable[int] | None = None,
                   connected_only: bool = True) -> list[EquivClass]:
    """Orbits of N-vote sufficient statistics under relabeling and position permutation.

    ``size`` is the number of distinct statistics in the orbit over a fixed set
    of n_M candidates, all of them used. ``N_M`` counts components of the fiber
    graph under moves of degree at most N - 1.
    """
    if N not in (2, 3):
        raise PreconditionError("only N in {2, 3} is supported")
    if N == 3 and r > 4 or r > 5:
        raise TooLargeError(f"classification at r={r}, N={N} is beyond desk scale")
    wanted = set(n_M) if n_M is not None else None
    out = []
    for cols in column_multisets(r, N):
        if wanted is not None and len(cols) not in wanted:
            continue
        if connected_only and not columns_connected(cols, r):
            continue
        if canonical_columns(cols) != cols:
            continue
        size = sum(labelings(c) for c in position_orbit(cols))
        summary = summarize_fiber(columns_to_stat(cols, N))
        out.append(EquivClass(
            representative=_cols_to_blocks(cols), r=r, N=N, n_M=len(cols), size=size,
            fiber_size=summary.size, N_M=summary.components,
            connected=columns_connected(cols, r),
            needs_degree3=N == 3 and summary.needs_degree3,
            indispensable=summary.indispensable,
        ))
    out.sort(key=lambda c: (c.n_M, c.N_M, c.representative.blocks))
    return out


def class_size_table(r: int) -> list[tuple[int, int, int, int]]:
    """Rows (r, n_M, N_M, total size) over connected three-vote statistics."""
    if r > 4:
        raise TooLargeError("class sizes are tabulated for r <= 4")
    totals: Counter = Counter()
    for c in classify_equiv(r, 3):
        totals[(c.n_M, c.N_M)] += c.size
    return [(r, m, k, totals[(m, k)]) for m, k in sorted(totals)]
