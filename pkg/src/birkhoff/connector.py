"""Connect two proper datasets with a common sufficient statistic.

Votes of the source are matched to votes of the target one pair at a time.
Each step raises the number of positions on which the working vote agrees
with its target vote, using at most three swap operations among two votes.
Steps may pass through improper datasets; these are then cut into hops
between proper datasets, each hop changing at most three votes, which makes
every hop a move of degree at most three.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .basis import Move
from .errors import (
    CompatibilityError,
    FiberMismatchError,
    NonterminationError,
    PreconditionError,
)
from .model import (
    Dataset,
    DatasetKind,
    ImproperSym,
    concurrence,
    dataset_kind,
    format_vote,
    is_proper_vote,
    suff_stat,
    vote_key,
)
from .swaps import (
    SwapSpec,
    SwapTrace,
    apply_swap,
    double_swap,
    extended_move_1,
    extended_move_2,
    find_resolvable_pairs,
    improper_cell,
    push_out,
    resolve_improper,
)

__all__ = [
    "ConnectionPath",
    "StepResult",
    "Operation",
    "Segment",
    "concurrence",
    "connect",
    "increase_concurrence_improper",
    "increase_concurrence_proper",
    "matching_chain",
    "segment_decomposition",
]


@dataclass(frozen=True)
class Operation:
    """A swap operation among the two votes ``votes``."""

    votes: frozenset
    before: Dataset
    after: Dataset
    trace: SwapTrace


@dataclass
class StepResult:
    dataset: Dataset
    touched: frozenset
    operations: list

    @property
    def traces(self) -> list[SwapTrace]:
        return [op.trace for op in self.operations]

    def __iter__(self):
        return iter((self.dataset, self.touched, self.traces))


def _op(before: Dataset, after: Dataset, votes: Iterable[int], trace: SwapTrace) -> Operation:
    return Operation(frozenset(votes), before, after, trace)


def _single(before: Dataset, spec: SwapSpec) -> Operation:
    after = apply_swap(before, spec)
    return _op(before, after, spec.votes, SwapTrace([spec], dataset_kind(before), dataset_kind(after), [0]))


def _result(ops: list[Operation], start: Dataset) -> StepResult:
    touched = frozenset().union(*(op.votes for op in ops)) if ops else frozenset()
    return StepResult(ops[-1].after if ops else start, touched, ops)


def _active(dataset: Dataset, active: Iterable[int] | None) -> list[int]:
    return sorted(active) if active is not None else list(range(dataset.N))


# ---------------------------------------------------------------------------
# raising the concurrence from a proper dataset


def increase_concurrence_proper(P: Dataset, i: int, target_vote: Sequence[int],
                                active: Iterable[int] | None = None) -> StepResult:
    """Raise the agreement of vote i with ``target_vote`` by up to three operations.

    The result is proper, or improper with its improper vote resolvable
    against vote i. ``active`` restricts which votes may be used.
    """
    if dataset_kind(P) is not DatasetKind.PROPER:
        raise PreconditionError("dataset must be proper")
    tv = tuple(target_vote)
    p = P[i]
    r = P.config.r
    if len(tv) != r or not is_proper_vote(tv):
        raise PreconditionError("target must be a proper vote of length r")
    if concurrence(p, tv) == r:
        raise PreconditionError("vote already equals the target")
    votes = [w for w in _active(P, active) if w != i]
    base = concurrence(p, tv)

    def ok(res: StepResult) -> bool:
        out = res.dataset
        if concurrence(out[i], tv) <= base:
            return False
        kind = dataset_kind(out)
        if kind is DatasetKind.PROPER:
            return True
        if kind is not DatasetKind.IMPROPER:
            return False
        return any(pr == i for _, pr, _ in find_resolvable_pairs(out))

    # a candidate shared by both votes but at different positions
    for j1 in range(r):
        b = tv[j1]
        if p[j1] == b or b not in p:
            continue
        j2, a = p.index(b), p[j1]
        for w in votes:
            if P[w][j1] != b:
                continue
            out, trace = double_swap(P, (i, w), (j1, j2), (a, b))
            res = _result([_op(P, out, (i, w), trace)], P)
            if ok(res):
                return res
        raise PreconditionError("target vote is not compatible with the dataset's statistic")

    # every shared candidate already sits in the same position
    j1 = next(j for j in range(r) if p[j] != tv[j])
    a, b = p[j1], tv[j1]
    holders = [w for w in votes if P[w][j1] == b]
    if not holders:
        raise PreconditionError("target vote is not compatible with the dataset's statistic")
    for w in holders:
        if a not in P[w]:
            res = _result([_single(P, SwapSpec((i, w), j1, (a, b)))], P)
            if ok(res):
                return res
    for w in holders:
        j2 = P[w].index(a)
        for x in votes:
            if x == w or a in P[x]:
                continue
            for d in P[x]:
                if d in P[w]:
                    continue
                op1 = _single(P, SwapSpec((w, x), j2, (a, d)))
                op2 = _single(op1.after, SwapSpec((i, w), j1, (a, b)))
                ops = [op1, op2]
                if dataset_kind(op2.after) is DatasetKind.IMPROPER:
                    out, trace = resolve_improper(op2.after, (x, w))
                    ops.append(_op(op2.after, out, (x, w), trace))
                res = _result(ops, P)
                if ok(res):
                    return res
    raise NonterminationError("no operation raised the concurrence")


# ---------------------------------------------------------------------------
# raising the concurrence from an improper dataset


def increase_concurrence_improper(I: Dataset, resolvable_pair: tuple[int, int],
                                  target_vote: Sequence[int],
                                  active: Iterable[int] | None = None) -> StepResult:
    """Raise the agreement of the proper vote of a resolvable pair, or make I proper.

    When I is made proper, the proper vote of the pair is left unchanged. When
    the result is improper, its improper vote is resolvable against that vote.
    """
    im, pr = resolvable_pair
    if dataset_kind(I) is not DatasetKind.IMPROPER or I.improper_index() != im:
        raise PreconditionError("dataset must be improper with improper vote i_im")
    j0, sym = improper_cell(I[im])
    a = sym.minus
    if I[pr][j0] != a:
        raise PreconditionError("not a resolvable pair")
    tv = tuple(target_vote)
    r = I.config.r
    if len(tv) != r or not is_proper_vote(tv):
        raise PreconditionError("target must be a proper vote of length r")
    others = [w for w in _active(I, active) if w not in (im, pr)]
    base = concurrence(I[pr], tv)
    start_pr = I[pr]

    def ok(res: StepResult) -> bool:
        out = res.dataset
        kind = dataset_kind(out)
        if kind is DatasetKind.PROPER:
            return concurrence(out[pr], tv) > base or out[pr] == start_pr
        if kind is not DatasetKind.IMPROPER or concurrence(out[pr], tv) <= base:
            return False
        return any(p == pr for _, p, _ in find_resolvable_pairs(out))

    def check(res: StepResult) -> StepResult:
        if not ok(res):
            raise NonterminationError("concurrence step missed its postcondition")
        return res

    # the target already has a at the improper position: resolve through another vote
    if tv[j0] == a:
        for w in others:
            if I[w][j0] == a:
                out, trace = resolve_improper(I, (im, w))
                return check(_result([_op(I, out, (im, w), trace)], I))
        raise PreconditionError("target vote is not compatible with the dataset's statistic")

    if a in tv:
        j2 = tv.index(a)
        ops: list[Operation] = []
        cur = I
        if cur[im][j2] != a:
            holders = [w for w in others if cur[w][j2] == a]
            if not holders:
                raise PreconditionError("target vote is not compatible with the dataset's statistic")
            out, trace = extended_move_1(cur, im, holders[0], j0, j2)
            ops.append(_op(cur, out, (im, holders[0]), trace))
            cur = out
        d = cur[pr][j2]
        out, trace = double_swap(cur, (pr, im), (j0, j2), (a, d))
        ops.append(_op(cur, out, (pr, im), trace))
        return check(_result(ops, I))

    # a is absent from the target vote
    d = tv[j0]
    ops = []
    cur = I
    if d not in sym.pluses:
        holders = [w for w in others if cur[w][j0] == d]
        if not holders:
            raise PreconditionError("target vote is not compatible with the dataset's statistic")
        out, trace = extended_move_2(cur, im, holders[0], j0)
        ops.append(_op(cur, out, (im, holders[0]), trace))
        cur = out
    if d in cur[pr]:
        j2 = cur[pr].index(d)
        out, trace = double_swap(cur, (pr, im), (j0, j2), (a, d))
        ops.append(_op(cur, out, (pr, im), trace))
        return check(_result(ops, I))
    a_spots = [j for j, e in enumerate(cur[im]) if e == a]
    if len(a_spots) > 1:
        def accept(out: Dataset) -> bool:
            e = out[im][j0]
            return (dataset_kind(out) is DatasetKind.IMPROPER
                    and isinstance(e, ImproperSym) and e.minus == a and d in e.pluses
                    and sum(x == a for x in out[im]) == 1 and out[pr] == cur[pr])

        found = None
        for w in others:
            if a in cur[w]:
                continue
            found = push_out(cur, im, w, a, accept)
            if found is not None:
                ops.append(_op(cur, found[0], (im, w), found[1]))
                cur = found[0]
                break
        if found is None:
            raise NonterminationError(f"could not send a copy of {a + 1} out of {format_vote(cur[im])}")
    ops.append(_single(cur, SwapSpec((pr, im), j0, (a, d))))
    return check(_result(ops, I))


# ---------------------------------------------------------------------------
# segments and paths


def _touched(source: Dataset, target: Dataset) -> tuple[int, ...]:
    """Indices of source votes removed by the move source -> target."""
    gone = Counter(source.votes) - Counter(target.votes)
    out = []
    for idx, v in enumerate(source.votes):
        if gone[v] > 0:
            out.append(idx)
            gone[v] -= 1
    return tuple(out)


@dataclass
class Segment:
    source: Dataset
    target: Dataset
    traces: list = field(default_factory=list)

    @property
    def move(self) -> Move:
        return Move.between(self.source.votes, self.target.votes)

    @property
    def degree(self) -> int:
        return self.move.degree

    @property
    def touched(self) -> tuple[int, ...]:
        return _touched(self.source, self.target)

    def to_obj(self) -> dict:
        return {"move": {format_vote(v): c for v, c in self.move.z},
                "touched": [i + 1 for i in self.touched]}


@dataclass
class ConnectionPath:
    start: Dataset
    end: Dataset
    segments: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def moves(self) -> list[Move]:
        return [s.move for s in self.segments]

    def replay(self) -> Counter:
        """Apply every move to the start's frequency vector."""
        counts = Counter(self.start.votes)
        for m in self.moves:
            nxt = m.apply(counts)
            if nxt is None:
                raise PreconditionError("a move drives a frequency negative")
            counts = nxt
        return counts

    def to_obj(self) -> dict:
        return {"segments": [s.to_obj() for s in self.segments]}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=1)


def _common_pair(A: Dataset, B: Dataset, R: frozenset) -> tuple[int, int] | None:
    pa = {(im, pr) for im, pr, _ in find_resolvable_pairs(A)}
    pb = {(im, pr) for im, pr, _ in find_resolvable_pairs(B)}
    for im, pr in sorted(pa & pb):
        if len(R | {im, pr}) <= 3:
            return im, pr
    return None


def _any_pair(D: Dataset, R: frozenset) -> tuple[int, int]:
    for im, pr, _ in find_resolvable_pairs(D):
        if len(R | {im, pr}) <= 3:
            return im, pr
    raise CompatibilityError("no resolvable pair sharing a vote with the operation")


def segment_decomposition(states: Sequence[Dataset], ops: Sequence[Operation]) -> list[Segment]:
    """Cut a chain of proper and improper datasets into proper-to-proper hops.

    ``ops[k]`` turns ``states[k]`` into ``states[k + 1]``; the first and last
    states must be proper. Each hop changes at most three votes.
    """
    if len(ops) != len(states) - 1:
        raise PreconditionError("need one operation between consecutive states")
    kinds = [dataset_kind(s) for s in states]
    if kinds[0] is not DatasetKind.PROPER or kinds[-1] is not DatasetKind.PROPER:
        raise PreconditionError("chain must start and end at proper datasets")
    if any(k not in (DatasetKind.PROPER, DatasetKind.IMPROPER) for k in kinds):
        raise PreconditionError("chain states must be proper or improper datasets")
    segments: list[Segment] = []
    k = 0
    while k < len(ops):
        end = k + 1
        while kinds[end] is not DatasetKind.PROPER:
            end += 1
        imps = list(range(k + 1, end))
        if not imps:
            segments.append(Segment(states[k], states[end], [ops[k].trace]))
        elif len(imps) == 1:
            segments.append(Segment(states[k], states[end], [ops[k].trace, ops[k + 1].trace]))
        else:
            anchor, anchor_traces = states[k], [ops[k].trace]
            for idx in imps[:-1]:
                I, J, R = states[idx], states[idx + 1], ops[idx].votes
                Q = _common_pair(I, J, R)
                if Q is None:
                    raise CompatibilityError(f"no common resolvable pair around operation {idx + 1}")
                Y, ty = resolve_improper(I, Q)
                Z, tz = resolve_improper(J, Q)
                segments.append(Segment(anchor, Y, anchor_traces + [ty]))
                segments.append(Segment(Y, Z, [ops[idx].trace, tz]))
                anchor, anchor_traces = Z, [tz]
            segments.append(Segment(anchor, states[end], anchor_traces + [ops[end - 1].trace]))
        k = end
    for s in segments:
        if s.degree > 3:
            raise CompatibilityError(f"hop changes {s.degree} votes")
    return segments


def _simplify(segments: list[Segment]) -> list[Segment]:
    """Drop zero moves and erase loops in the sequence of visited multisets."""
    if not segments:
        return []
    points = [segments[0].source] + [s.target for s in segments]
    traces = [s.traces for s in segments]
    out_points = [points[0]]
    out_traces: list[list] = []
    seen = {points[0]: 0}
    for p, tr in zip(points[1:], traces):
        if p in seen:
            cut = seen[p]
            for q in out_points[cut + 1:]:
                del seen[q]
            out_points = out_points[:cut + 1]
            out_traces = out_traces[:cut]
            continue
        seen[p] = len(out_points)
        out_points.append(p)
        out_traces.append(tr)
    return [Segment(a, b, t) for a, b, t in zip(out_points, out_points[1:], out_traces)]


def _best_pair(cur: Dataset, sources: Iterable[int], target: Dataset, free_t: Iterable[int]):
    best = None
    for i in sources:
        for t in free_t:
            key = (-concurrence(cur[i], target[t]), vote_key(cur[i]), vote_key(target[t]), i, t)
            if best is None or key < best[0]:
                best = (key, i, t)
    return None if best is None else (best[1], best[2])


def matching_chain(P: Dataset, P2: Dataset) -> tuple[list[Dataset], list[Operation]]:
    """Run the vote-matching loop; returns the visited states and the operations between them."""
    for D in (P, P2):
        if dataset_kind(D) is not DatasetKind.PROPER:
            raise PreconditionError("both datasets must be proper")
    if P.config != P2.config or P.N != P2.N or suff_stat(P) != suff_stat(P2):
        raise FiberMismatchError("datasets have different sufficient statistics")
    N, r = P.N, P.config.r
    states = [P]
    ops: list[Operation] = []
    cur = P
    active = set(range(N))
    free_t = set(range(N))
    work = None
    limit = 10 * N * r + 10
    rounds = 0

    def freeze_matches() -> None:
        nonlocal work
        for i in sorted(active):
            v = cur[i]
            if not is_proper_vote(v):
                continue
            for t in sorted(free_t):
                if P2[t] == v:
                    active.discard(i)
                    free_t.discard(t)
                    if work is not None and (work[0] == i or work[1] == t):
                        work = None
                    break

    while True:
        freeze_matches()
        if not active:
            break
        rounds += 1
        if rounds > limit:
            raise NonterminationError(f"no match after {limit} rounds")
        kind = dataset_kind(cur)
        if kind is DatasetKind.PROPER:
            if work is None:
                work = _best_pair(cur, sorted(active), P2, sorted(free_t))
            i, t = work
            res = increase_concurrence_proper(cur, i, P2[t], active)
        else:
            pairs = [(im, pr) for im, pr, _ in find_resolvable_pairs(cur) if pr in active]
            prs = sorted({pr for _, pr in pairs})
            if work is None or work[0] not in prs:
                work = _best_pair(cur, prs, P2, sorted(free_t))
            i, t = work
            im = next(im for im, pr in pairs if pr == i)
            res = increase_concurrence_improper(cur, (im, i), P2[t], active)
        for op in res.operations:
            ops.append(op)
            states.append(op.after)
        cur = res.dataset
    if cur != P2:
        raise NonterminationError("matching finished away from the target")
    return states, ops


def connect(P: Dataset, P2: Dataset) -> ConnectionPath:
    """A path of proper datasets from P to P2, each hop a move of degree <= 3."""
    states, ops = matching_chain(P, P2)
    return ConnectionPath(P, P2, _simplify(segment_decomposition(states, ops)))
