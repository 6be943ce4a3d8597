"""Swaps between two votes and the procedures that clean up after them.

A swap ``{i1, i2}: k1 <->_j k2`` adds ``k2 - k1`` to the entry of vote i1 at
position j and ``k1 - k2`` to the entry of vote i2, treating entries as formal
sums of candidates. The sufficient statistic never changes.

Collision resolution works on a pair of votes at a time. A collision (a column
sum of two) is cleared by pushing one copy of the candidate to the other vote;
the candidate received in exchange may collide in turn, which continues the
chain. The engine below explores these chains depth first, following the
push-the-older-copy order first, and hands every collision-free outcome to the
caller, which keeps the first one meeting its postcondition.
"""

from __future__ import annotations

import functools
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from .errors import NonterminationError, NotApplicableError, PreconditionError
from .model import (
    Dataset,
    DatasetKind,
    Entry,
    ImproperSym,
    column_sums,
    dataset_kind,
    entry_terms,
    make_entry,
    shift_entry,
)

# cap on chain-engine nodes per call; the connector needs far fewer
MAX_SEARCH_NODES = 50_000


@dataclass(frozen=True)
class SwapSpec:
    """``{i1, i2}: k1 <->_j k2``; vote i1 gives up k1 for k2 at position j.

    If vote i1 holds k2 but not k1 there, the exchange runs the other way, so
    applying the same swap twice restores the dataset.
    """

    votes: tuple
    pos: int
    cands: tuple

    def __post_init__(self) -> None:
        i1, i2 = self.votes
        k1, k2 = self.cands
        if i1 == i2:
            raise ValueError("a swap needs two distinct votes")
        if k1 == k2:
            raise ValueError("a swap needs two distinct candidates")
        object.__setattr__(self, "votes", (int(i1), int(i2)))
        object.__setattr__(self, "cands", (int(k1), int(k2)))

    def to_obj(self) -> dict:
        return {"votes": [self.votes[0] + 1, self.votes[1] + 1], "pos": self.pos + 1,
                "cands": [self.cands[0] + 1, self.cands[1] + 1]}

    @classmethod
    def from_obj(cls, obj: dict) -> "SwapSpec":
        return cls((obj["votes"][0] - 1, obj["votes"][1] - 1), obj["pos"] - 1,
                   (obj["cands"][0] - 1, obj["cands"][1] - 1))

    def __str__(self) -> str:
        i1, i2 = self.votes
        return f"{{{i1 + 1},{i2 + 1}}}: {self.cands[0] + 1} <->_{self.pos + 1} {self.cands[1] + 1}"


@dataclass
class SwapTrace:
    """Elementary swaps in application order; ``chains`` marks where each chain starts."""

    steps: list = field(default_factory=list)
    start_kind: DatasetKind | None = None
    end_kind: DatasetKind | None = None
    chains: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def chain_slices(self) -> list[list[SwapSpec]]:
        bounds = list(self.chains) + [len(self.steps)]
        return [self.steps[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]

    def replay(self, dataset: Dataset) -> Dataset:
        votes = [list(v) for v in dataset.votes]
        for spec in self.steps:
            _apply_raw(votes, spec)
        return Dataset(tuple(tuple(v) for v in votes), dataset.config)

    def to_obj(self) -> list:
        return [s.to_obj() for s in self.steps]

    def to_json(self) -> str:
        return json.dumps(self.to_obj())

    @classmethod
    def from_json(cls, text: str) -> "SwapTrace":
        steps = [SwapSpec.from_obj(o) for o in json.loads(text)]
        return cls(steps, chains=[0] if steps else [])


def _apply_raw(votes: list[list[Entry]], spec: SwapSpec) -> None:
    i1, i2 = spec.votes
    k1, k2 = spec.cands
    j = spec.pos
    here = _pluses(votes[i1][j])
    if k1 not in here and k2 in here:
        # the exchange is symmetric: vote i1 holding k2 gives it back for k1
        k1, k2 = k2, k1
    a = shift_entry(votes[i1][j], k2, k1)
    b = shift_entry(votes[i2][j], k1, k2)
    if a is None or b is None:
        raise NotApplicableError(f"swap {spec} leaves a non-representable entry")
    votes[i1][j] = a
    votes[i2][j] = b


def _is_dataset(kind: DatasetKind) -> bool:
    return kind is not DatasetKind.INVALID


def apply_swap(dataset: Dataset, spec: SwapSpec) -> Dataset:
    """Apply one swap; the result must again be a dataset."""
    i1, i2 = spec.votes
    if not (0 <= i1 < dataset.N and 0 <= i2 < dataset.N):
        raise NotApplicableError(f"vote index out of range in {spec}")
    if not 0 <= spec.pos < dataset.config.r:
        raise NotApplicableError(f"position out of range in {spec}")
    votes = [list(v) for v in dataset.votes]
    _apply_raw(votes, spec)
    out = Dataset(tuple(tuple(v) for v in votes), dataset.config)
    if not _is_dataset(dataset_kind(out)):
        raise NotApplicableError(f"swap {spec} does not give a dataset")
    return out


def apply_steps(dataset: Dataset, steps: Sequence[SwapSpec]) -> Dataset:
    """Apply swaps in order, checking only the final result."""
    votes = [list(v) for v in dataset.votes]
    for spec in steps:
        _apply_raw(votes, spec)
    out = Dataset(tuple(tuple(v) for v in votes), dataset.config)
    if not _is_dataset(dataset_kind(out)):
        raise NotApplicableError("swap sequence does not end in a dataset")
    return out


def double_swap(dataset: Dataset, votes: tuple[int, int], positions: tuple[int, int],
                cands: tuple[int, int]) -> tuple[Dataset, SwapTrace]:
    """``{i1, i2}: a <->_j b <->_j' a``.

    Vote i1 trades a for b at j and b for a at j'. The state between the two
    swaps need not be a dataset, so only the end result is checked. With
    j == j' the second swap undoes the first.
    """
    (i1, i2), (j, jj), (a, b) = votes, positions, cands
    steps = [SwapSpec((i1, i2), j, (a, b)), SwapSpec((i1, i2), jj, (b, a))]
    out = apply_steps(dataset, steps)
    return out, SwapTrace(steps, dataset_kind(dataset), dataset_kind(out), [0])


# ---------------------------------------------------------------------------
# pair-level chain engine


Pair = tuple  # (vote0, vote1), each a tuple of entries
Step = tuple  # (position, given by slot 0, given by slot 1)


def _exchange(pair: Pair, j: int, k0: int, k1: int) -> Pair | None:
    """Slot 0 gives k0 and takes k1 at position j; slot 1 the reverse."""
    u, w = pair
    a = shift_entry(u[j], k1, k0)
    b = shift_entry(w[j], k0, k1)
    if a is None or b is None:
        return None
    return (u[:j] + (a,) + u[j + 1:], w[:j] + (b,) + w[j + 1:])


def _pluses(e: Entry) -> tuple[int, ...]:
    return e.pluses if isinstance(e, ImproperSym) else (e,)


def _vote_ok(vote: Sequence[Entry]) -> bool:
    return all(0 <= s <= 2 for s in column_sums(vote).values())


def _collisions(pair: Pair) -> list[tuple[int, int]]:
    out = []
    for s in (0, 1):
        for k, c in sorted(column_sums(pair[s]).items()):
            if c == 2:
                out.append((s, k))
    return out


@dataclass
class _Outcome:
    pair: Pair
    steps: list
    chains: list


def chain_resolutions(pair: Pair, protected: frozenset = frozenset(), max_steps: int = 8,
                      first_steps: Sequence[Step] = (), max_nodes: int = MAX_SEARCH_NODES
                      ) -> Iterator[_Outcome]:
    """Yield collision-free outcomes reachable by collision-driven chains.

    ``protected`` holds (slot, position) cells the chains may not touch.
    ``first_steps`` have already been applied to ``pair`` and seed the trace.
    """
    seen: set = set()
    nodes = 0

    def rec(pair: Pair, steps: list, chains: list, last: tuple):
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes or pair in seen:
            return
        seen.add(pair)
        if not (_vote_ok(pair[0]) and _vote_ok(pair[1])):
            return
        coll = _collisions(pair)
        if not coll:
            yield _Outcome(pair, list(steps), list(chains))
            return
        if len(steps) >= max_steps:
            return
        # continue the running chain when a candidate just received collides
        target, fresh_pos = coll[0], None
        for s_last, k_last, j_last in last:
            if (s_last, k_last) in coll:
                target, fresh_pos = (s_last, k_last), j_last
                break
        s, k = target
        other = 1 - s
        positions = [j for j, e in enumerate(pair[s]) if k in _pluses(e) and (s, j) not in protected]
        if fresh_pos is not None:
            # push the copy that was there before the last swap
            positions.sort(key=lambda j: j == fresh_pos)
        else:
            positions.reverse()
        for j in positions:
            if (other, j) in protected:
                continue
            for t in _pluses(pair[other][j]):
                if t == k:
                    continue
                k0, k1 = (k, t) if s == 0 else (t, k)
                nxt = _exchange(pair, j, k0, k1)
                if nxt is None:
                    continue
                new_chains = chains if fresh_pos is not None else chains + [len(steps)]
                yield from rec(nxt, steps + [(j, k0, k1)], new_chains, ((s, t, j), (other, k, j)))

    last0 = ()
    if first_steps:
        j, k0, k1 = first_steps[-1]
        last0 = ((0, k1, j), (1, k0, j))
    yield from rec(pair, list(first_steps), [0] if first_steps else [], last0)


def _pair_steps_to_specs(steps: Sequence[Step], i0: int, i1: int) -> list[SwapSpec]:
    return [SwapSpec((i0, i1), j, (k0, k1)) for j, k0, k1 in steps]


def _finish(dataset: Dataset, i0: int, i1: int, outcome: _Outcome) -> tuple[Dataset, SwapTrace]:
    out = dataset.replace({i0: outcome.pair[0], i1: outcome.pair[1]})
    chains = sorted(set(outcome.chains)) or ([0] if outcome.steps else [])
    trace = SwapTrace(_pair_steps_to_specs(outcome.steps, i0, i1), dataset_kind(dataset),
                      dataset_kind(out), chains)
    return out, trace


def _search(dataset: Dataset, i0: int, i1: int, start: Pair, first_steps: Sequence[Step],
            accept: Callable[[Dataset], bool], protected: frozenset, max_steps: int):
    for outcome in chain_resolutions(start, protected, max_steps, first_steps):
        out, trace = _finish(dataset, i0, i1, outcome)
        if accept(out):
            return out, trace
    return None


# ---------------------------------------------------------------------------
# resolving procedures


def resolve_collisions(dataset: Dataset, vote_pair: tuple[int, int]) -> tuple[Dataset, SwapTrace]:
    """Clear every collision in two votes by chains of swaps between them."""
    i, ii = vote_pair
    if i == ii:
        raise PreconditionError("need two distinct votes")
    if dataset.improper_index() is not None:
        raise PreconditionError("collision resolution needs a dataset without improper elements")
    pair = (dataset[i], dataset[ii])
    totals = column_sums(pair[0] + pair[1])
    if any(c >= 3 for c in totals.values()):
        raise PreconditionError("a candidate appears three or more times in the two votes")
    if not _collisions(pair):
        kind = dataset_kind(dataset)
        return dataset, SwapTrace([], kind, kind, [])
    r = dataset.config.r
    found = _search(dataset, i, ii, pair, (), lambda d: True, frozenset(), 2 * r)
    if found is None:
        raise NonterminationError(f"collisions not resolved within {2 * r} swaps")
    return found


def find_resolvable_pairs(dataset: Dataset) -> list[tuple[int, int, int]]:
    """All (improper vote, proper vote, position) with the subtracted candidate there."""
    im = dataset.improper_index()
    if im is None or dataset_kind(dataset) is not DatasetKind.IMPROPER:
        raise PreconditionError("dataset is not improper")
    j, sym = next((j, e) for j, e in enumerate(dataset[im]) if isinstance(e, ImproperSym))
    return [(im, i, j) for i, v in enumerate(dataset.votes) if i != im and v[j] == sym.minus]


def improper_cell(vote: Sequence[Entry]) -> tuple[int, ImproperSym]:
    for j, e in enumerate(vote):
        if isinstance(e, ImproperSym):
            return j, e
    raise PreconditionError("vote has no improper element")


def resolve_improper(dataset: Dataset, resolvable_pair: tuple[int, int]) -> tuple[Dataset, SwapTrace]:
    """Turn an improper dataset proper using a resolvable pair [i_im, i_pr]."""
    im, pr = resolvable_pair
    if dataset_kind(dataset) is not DatasetKind.IMPROPER or dataset.improper_index() != im:
        raise PreconditionError("first index must be the improper vote of an improper dataset")
    j, sym = improper_cell(dataset[im])
    if pr == im or dataset[pr][j] != sym.minus:
        raise PreconditionError("not a resolvable pair")
    pair = (dataset[im], dataset[pr])
    r = dataset.config.r
    for give in sym.pluses:
        start = _exchange(pair, j, give, sym.minus)
        if start is None:
            continue
        found = _search(dataset, im, pr, start, [(j, give, sym.minus)],
                        lambda d: dataset_kind(d) is DatasetKind.PROPER, frozenset(), 2 * r + 1)
        if found is not None:
            return found
    raise NonterminationError("improper element not resolved within the step bound")


def extended_move_1(dataset: Dataset, i_im: int, i: int, j: int, jj: int) -> tuple[Dataset, SwapTrace]:
    """Bring candidate a (the subtracted one) into the improper vote at position jj.

    Vote i holds a at jj. Afterwards the improper vote holds a at jj and one of
    b+c-a, b+d-a, c+d-a at j, where d is vote i's entry at j.
    """
    if dataset_kind(dataset) is not DatasetKind.IMPROPER or dataset.improper_index() != i_im:
        raise PreconditionError("i_im must be the improper vote of an improper dataset")
    jc, sym = improper_cell(dataset[i_im])
    a = sym.minus
    if jc != j or jj == j or i == i_im:
        raise PreconditionError("bad positions or votes")
    d = dataset[i][j]
    if dataset[i][jj] != a or d == a or isinstance(d, ImproperSym):
        raise PreconditionError("vote i must hold a at jj and another candidate at j")
    b, c = sym.pluses
    allowed = {sym}
    for p, q in ((b, d), (c, d)):
        if len({p, q, a}) == 3:
            allowed.add(ImproperSym(p, q, a))
    if dataset[i_im][jj] == a:
        kind = dataset_kind(dataset)
        return dataset, SwapTrace([], kind, kind, [])
    e = dataset[i_im][jj]
    pair = (dataset[i_im], dataset[i])
    start = _exchange(pair, jj, e, a)
    if start is None:
        raise NotApplicableError("initial swap is not representable")

    def accept(out: Dataset) -> bool:
        return (dataset_kind(out) is DatasetKind.IMPROPER and out[i_im][jj] == a
                and out[i_im][j] in allowed)

    r = dataset.config.r
    found = _search(dataset, i_im, i, start, [(jj, e, a)], accept, frozenset({(0, jj)}), 4 * r)
    if found is None:
        raise NonterminationError(f"no valid chain within {4 * r} swaps")
    return found


def extended_move_2(dataset: Dataset, i_im: int, i: int, j: int) -> tuple[Dataset, SwapTrace]:
    """Trade a positive part of the improper element at j for vote i's candidate d."""
    if dataset_kind(dataset) is not DatasetKind.IMPROPER or dataset.improper_index() != i_im:
        raise PreconditionError("i_im must be the improper vote of an improper dataset")
    jc, sym = improper_cell(dataset[i_im])
    d = dataset[i][j]
    if jc != j or i == i_im or isinstance(d, ImproperSym) or d in (sym.minus, *sym.pluses):
        raise PreconditionError("vote i must hold a fresh candidate at the improper position")
    a = sym.minus
    pair = (dataset[i_im], dataset[i])
    r = dataset.config.r
    for give in sym.pluses:
        keep = sym.other_plus(give)
        want = (ImproperSym(keep, d, a), give)
        start = _exchange(pair, j, give, d)
        if start is None:
            continue

        def accept(out: Dataset, want=want) -> bool:
            return dataset_kind(out) is DatasetKind.IMPROPER and (out[i_im][j], out[i][j]) == want

        found = _search(dataset, i_im, i, start, [(j, give, d)], accept,
                        frozenset({(0, j), (1, j)}), 4 * r)
        if found is not None:
            return found
    raise NonterminationError(f"no valid chain within {4 * r} swaps")


def push_out(dataset: Dataset, i_im: int, i: int, cand: int,
             accept: Callable[[Dataset], bool]) -> tuple[Dataset, SwapTrace] | None:
    """Send one positive copy of ``cand`` from vote i_im to vote i, then clear collisions.

    Tries each copy in turn and returns the first outcome passing ``accept``.
    """
    pair = (dataset[i_im], dataset[i])
    r = dataset.config.r
    for jj, e in enumerate(dataset[i_im]):
        if e != cand:
            continue
        for t in _pluses(dataset[i][jj]):
            if t == cand:
                continue
            start = _exchange(pair, jj, cand, t)
            if start is None:
                continue
            found = _search(dataset, i_im, i, start, [(jj, cand, t)], accept, frozenset(), 4 * r)
            if found is not None:
                return found
    return None


# ---------------------------------------------------------------------------
# exhaustive swap operations (test oracle)


def position_options(u: Entry, w: Entry) -> list[tuple[Entry, Entry]]:
    """Entry pairs reachable at one position: keep, or trade one positive part each way."""
    opts = [(u, w)]
    for k0 in _pluses(u):
        for k1 in _pluses(w):
            if k0 == k1:
                continue
            a = shift_entry(u, k1, k0)
            b = shift_entry(w, k0, k1)
            if a is not None and b is not None and (a, b) not in opts:
                opts.append((a, b))
    return opts


@functools.lru_cache(maxsize=None)
def position_splits(u: Entry, w: Entry, n: int) -> tuple[tuple[Entry, Entry], ...]:
    """Every entry pair (x, y) with x + y = u + w as formal sums of candidates.

    These are the outcomes of any chain of swaps between two votes at one
    position. The first pair is always (u, w).
    """
    total = Counter(entry_terms(u))
    total.update(entry_terms(w))
    out = [(u, w)]
    singles = list(range(n))
    impropers = [ImproperSym(p, q, m) for p, q in itertools.combinations(range(n), 2)
                 for m in range(n) if m not in (p, q)]
    for x in singles + impropers:
        rest = Counter(total)
        rest.subtract(entry_terms(x))
        y = make_entry({k: c for k, c in rest.items() if c})
        if y is not None and (x, y) != (u, w):
            out.append((x, y))
    return tuple(out)


def swap_operations(dataset: Dataset, i: int, ii: int) -> Iterator[Dataset]:
    """Every dataset reachable by exchanging entries of two votes on a subset of positions."""
    u, w = dataset[i], dataset[ii]
    per_pos = [position_options(a, b) for a, b in zip(u, w)]
    seen = set()
    for choice in itertools.product(*per_pos):
        nu = tuple(c[0] for c in choice)
        nw = tuple(c[1] for c in choice)
        out = dataset.replace({i: nu, ii: nw})
        if dataset_kind(out) in (DatasetKind.PROPER, DatasetKind.IMPROPER) and out not in seen:
            seen.add(out)
            yield out

