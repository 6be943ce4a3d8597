import itertools
import random

import numpy as np

from birkhoff.model import Config, Dataset, enumerate_votes, from_letters


def ds(rows, n, r=None):
    """Dataset from letter rows such as ["a b", "b c+d-a"]."""
    votes = tuple(from_letters(rows))
    return Dataset(votes, Config(n, r or len(votes[0])))


def random_dataset(rng: random.Random, n: int, r: int, N: int) -> Dataset:
    votes = enumerate_votes(Config(n, r))
    return Dataset(tuple(rng.choice(votes) for _ in range(N)), Config(n, r))


def shuffled_partner(rng: random.Random, D: Dataset, tries: int = 500) -> Dataset | None:
    """Another ordered dataset with the same statistic, by per-position shuffles."""
    N, r = D.N, D.config.r
    for _ in range(tries):
        cols = [[v[j] for v in D.votes] for j in range(r)]
        for col in cols:
            rng.shuffle(col)
        votes = [tuple(cols[j][i] for j in range(r)) for i in range(N)]
        if all(len(set(v)) == r for v in votes):
            return Dataset(tuple(votes), D.config)
    return None


def brute_Z(psi, n, r):
    return sum(
        float(np.prod([psi[j, k] for j, k in enumerate(v)]))
        for v in itertools.permutations(range(n), r)
    )


def distinct_partner(rng: random.Random, D: Dataset, tries: int = 50) -> Dataset | None:
    """A partner from the same fiber that differs from D as a multiset, if one turns up."""
    base = sorted(D.votes)
    for _ in range(tries):
        Q = shuffled_partner(rng, D)
        if Q is not None and sorted(Q.votes) != base:
            return Q
    return None
