"""Random walks over fibers, conditional p-values and maximum likelihood.

Two walks are provided. The Metropolis walk moves between proper datasets of a
fiber with degree-2 and degree-3 moves and has the uniform distribution on the
fiber as its stationary law. The extended walk applies random swap operations
between two votes and may pass through improper datasets; it is an exploration
device with no claimed stationary law, and its improper states are never
reported as samples.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .basis import random_move
from .errors import NonconvergenceError, PreconditionError
from .model import (
    Config,
    Dataset,
    DatasetKind,
    ModelParams,
    dataset_from_counts,
    dataset_kind,
    enumerate_votes,
    position_marginals,
    compute_Z,
    suff_stat,
)
from .swaps import position_splits

MASK64 = (1 << 64) - 1
PSI_FLOOR = 1e-9


class Walk(enum.Enum):
    PROPER_MOVES = "proper"
    EXTENDED_SWAP = "extended"


class Proposal(enum.Enum):
    LOCAL = "local"  # shuffle positions among 2 or 3 votes of the current dataset
    GLOBAL = "global"  # draw the votes of the move from all of S_{n,r}


@dataclass(frozen=True)
class ChainConfig:
    steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    walk: Walk = Walk.PROPER_MOVES
    proposal: Proposal = Proposal.LOCAL

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < steps")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class ChainState:
    current: Dataset
    rng: np.random.Generator
    step: int = 0
    accepted: int = 0
    stat_key: tuple = field(default=(), repr=False)

    @classmethod
    def start(cls, dataset: Dataset, config: ChainConfig) -> "ChainState":
        kind = dataset_kind(dataset)
        if kind is not DatasetKind.PROPER:
            raise PreconditionError("chains start from a proper dataset")
        return cls(dataset, np.random.default_rng(config.seed), stat_key=suff_stat(dataset).key())


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: (new state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def chain_seeds(master: int, k: int) -> list[int]:
    """Seeds for k independent chains, drawn from a splitmix64 stream."""
    out, state = [], master & MASK64
    for _ in range(k):
        state, z = splitmix64(state)
        out.append(z)
    return out


def _log_mult(counts: Counter) -> float:
    return sum(math.lgamma(c + 1) for c in counts.values())


@functools.lru_cache(maxsize=200_000)
def valid_shuffles(start: tuple) -> tuple:
    """All collision-free results of permuting each position among ``start``'s votes.

    One entry per tuple of per-position permutations, so equal results repeat.
    """
    d = len(start)
    r = len(start[0])
    perms = list(itertools.permutations(range(d)))
    out = []
    rows: list[list[int]] = [[] for _ in range(d)]

    def rec(j: int) -> None:
        if j == r:
            out.append(tuple(tuple(row) for row in rows))
            return
        for perm in perms:
            picks = [start[p][j] for p in perm]
            if any(picks[i] in rows[i] for i in range(d)):
                continue
            for i in range(d):
                rows[i].append(picks[i])
            rec(j + 1)
            for i in range(d):
                rows[i].pop()

    rec(0)
    return tuple(out)


def mh_uniform_step(state: ChainState, config: ChainConfig) -> ChainState:
    """One Metropolis step with a degree-2 or degree-3 move (probability 1/2 each).

    The local proposal picks that many slots of the current ordered dataset and
    replaces their votes by a uniform collision-free shuffle of each position
    among them. With V(x) valid shuffles from x, accepting with probability
    min(1, prod y! / prod x! * V(x) / V(y)) over vote multiplicities makes the
    walk uniform on the fiber of multisets.
    """
    rng = state.rng
    cur = state.current
    degree = 2 if rng.random() < 0.5 else 3
    state.step += 1
    if config.proposal is Proposal.GLOBAL:
        move = random_move(rng, cur.config, degree)
        if move is None:
            return state
        counts = move.apply(cur.counts())
        if counts is None:
            return state
        state.current = dataset_from_counts(counts, cur.config)
        state.accepted += 1
        return state
    N = cur.N
    if N < 2:
        return state
    d = min(degree, N)
    slots = sorted(rng.choice(N, size=d, replace=False).tolist())
    start = tuple(cur[s] for s in slots)
    opts = valid_shuffles(start)
    new = opts[int(rng.integers(len(opts)))]
    if new == start:
        return state
    nxt = cur.replace(dict(zip(slots, new)))
    log_ratio = (_log_mult(nxt.counts()) - _log_mult(cur.counts())
                 + math.log(len(opts)) - math.log(len(valid_shuffles(new))))
    if log_ratio < 0 and rng.random() >= math.exp(log_ratio):
        return state
    state.current = nxt
    state.accepted += 1
    return state


def extended_step(state: ChainState, config: ChainConfig) -> ChainState:
    """One random swap operation among two uniformly chosen votes.

    At every position the two entries are re-split uniformly among all entry
    pairs with the same formal sum, which covers any chain of swaps between
    the two votes. The step is held unless the result is proper or improper.
    """
    rng = state.rng
    cur = state.current
    state.step += 1
    if cur.N < 2:
        return state
    i, ii = (int(x) for x in rng.choice(cur.N, size=2, replace=False))
    n = cur.config.n
    u, w = [], []
    for a, b in zip(cur[i], cur[ii]):
        opts = position_splits(a, b, n)
        x, y = opts[int(rng.integers(len(opts)))]
        u.append(x)
        w.append(y)
    nxt = cur.replace({i: tuple(u), ii: tuple(w)})
    if dataset_kind(nxt) not in (DatasetKind.PROPER, DatasetKind.IMPROPER):
        return state
    state.current = nxt
    state.accepted += 1
    return state


def iter_chain(dataset: Dataset, config: ChainConfig) -> Iterator[tuple[int, Dataset]]:
    """Yield (step, dataset) after burn-in, every ``thin`` steps, at proper states only."""
    state = ChainState.start(dataset, config)
    step_fn = mh_uniform_step if config.walk is Walk.PROPER_MOVES else extended_step
    for _ in range(config.steps):
        step_fn(state, config)
        if state.step > config.burn_in and (state.step - config.burn_in) % config.thin == 0:
            if config.walk is Walk.PROPER_MOVES or dataset_kind(state.current) is DatasetKind.PROPER:
                yield state.step, state.current


def run_chain(dataset: Dataset, config: ChainConfig) -> list[Dataset]:
    return [d for _, d in iter_chain(dataset, config)]


def visit_counts(dataset: Dataset, config: ChainConfig) -> Counter:
    """Multiset visit counts of the recorded proper states."""
    return Counter(d for _, d in iter_chain(dataset, config))


def run_chains(dataset: Dataset, config: ChainConfig, k: int, jobs: int = 1) -> list[Dataset]:
    """k independent chains seeded from config.seed, concatenated in chain order."""
    configs = [ChainConfig(config.steps, config.burn_in, config.thin, s, config.walk, config.proposal)
               for s in chain_seeds(config.seed, k)]
    if jobs <= 1:
        parts = [run_chain(dataset, c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda c: run_chain(dataset, c), configs))
    return [d for part in parts for d in part]


# ---------------------------------------------------------------------------
# goodness of fit


class ChiSquare:
    """Pearson statistic against fixed model parameters, for repeated evaluation."""

    def __init__(self, params: ModelParams, config: Config):
        self.params = params
        self.config = config
        self.Z = compute_Z(params, config)

    def expected(self, vote, N: int) -> float:
        psi = self.params.psi
        return N * float(np.prod([psi[j, k] for j, k in enumerate(vote)])) / self.Z

    def __call__(self, dataset: Dataset) -> float:
        # sum (x - e)^2 / e over all votes equals sum_{x > 0} x^2 / e - N
        N = dataset.N
        return sum(x * x / self.expected(v, N) for v, x in dataset.counts().items()) - N


def chi_square_stat(dataset: Dataset, params: ModelParams) -> float:
    """Pearson chi-square over every vote of S_{n,r}, expected counts N p(vote)."""
    config = dataset.config
    counts = dataset.counts()
    cs = ChiSquare(params, config)
    total = 0.0
    for v in enumerate_votes(config):
        e = cs.expected(v, dataset.N)
        total += (counts.get(v, 0) - e) ** 2 / e
    return total


def estimate_pvalue(observed: Dataset, statistic: Callable[[Dataset], float],
                    config: ChainConfig, batches: int = 20) -> tuple[float, float]:
    """Monte Carlo P(statistic >= observed value) under the uniform law on the fiber.

    Returns (p, se) with a batch-means standard error. Values within a relative
    1e-9 of the observed one count as ties and are included.
    """
    if config.walk is not Walk.PROPER_MOVES:
        raise PreconditionError("p-values use the Metropolis walk")
    s0 = statistic(observed)
    tol = 1e-9 * max(1.0, abs(s0))
    cache: dict[Dataset, bool] = {}
    hits = []
    for _, d in iter_chain(observed, config):
        if d not in cache:
            cache[d] = statistic(d) >= s0 - tol
        hits.append(cache[d])
    x = np.asarray(hits, dtype=float)
    p = float(x.mean())
    b = min(batches, len(x))
    if b < 2:
        return p, 0.0
    means = np.array([part.mean() for part in np.array_split(x, b)])
    return p, float(means.std(ddof=1) / math.sqrt(b))


# ---------------------------------------------------------------------------
# likelihood


def loglik(dataset: Dataset, params: ModelParams) -> float:
    """sum over votes of log p(vote)."""
    logpsi = np.log(params.psi)
    s = sum(logpsi[j, k] for v in dataset for j, k in enumerate(v))
    return float(s - dataset.N * math.log(compute_Z(params, dataset.config)))


def loglik_gradient(dataset: Dataset, params: ModelParams) -> np.ndarray:
    """Gradient in theta = log psi: t - N mu, with mu the position marginals."""
    t = suff_stat(dataset).t
    return t - dataset.N * position_marginals(params, dataset.config)


def fit_mle(dataset: Dataset, config: Config | None = None, tol: float = 1e-6,
            max_iter: int = 10_000) -> ModelParams:
    """Maximum likelihood psi by cyclic proportional fitting of each position's margin.

    Rescaling row j by t_j / (N mu_j) matches that position's margin exactly,
    so each sweep is a coordinate ascent step. Entries are floored at 1e-9.
    Converged when the gradient's max-norm is at most ``tol``.
    """
    config = config or dataset.config
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = suff_stat(dataset).t.astype(float)
    N = dataset.N
    target = t / N
    params = ModelParams.uniform(config)
    for _ in range(max_iter):
        mu = position_marginals(params, config)
        if np.abs(N * (target - mu)).max() <= tol:
            return params
        psi = np.array(params.psi)
        for j in range(config.r):
            mu = position_marginals(ModelParams(psi), config)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(mu[j] > 0, target[j] / mu[j], 0.0)
            psi[j] = np.maximum(psi[j] * ratio, PSI_FLOOR)
            psi[j] /= psi[j].sum()
        params = ModelParams(psi)
    raise NonconvergenceError(f"gradient above {tol} after {max_iter} sweeps")
