import itertools
import json
import random
from collections import Counter
from importlib import resources
from math import comb

import numpy as np
import pytest

from birkhoff.errors import PreconditionError, TooLargeError
from birkhoff.fiber import (
    BlockStat,
    FiberElement,
    block_graph,
    class_size_table,
    classify_equiv,
    enumerate_fiber,
    fiber_graph,
    fiber_of,
    move_degree,
    summarize_fiber,
)
from birkhoff.model import Config, Dataset, SuffStat, config_matrix, enumerate_votes, suff_stat

from _helpers import ds, random_dataset

a, b, c, d, e, f = range(6)

WORKED = BlockStat(((a, a, b), (c, c, d), (d, e, f)))


def two_vote_size(L):
    return 2 ** (L - 1) if L else 1


def brute_fiber(t: SuffStat):
    """Multisets of N votes from S_{n,r} with statistic t, by exhaustive search."""
    config = Config(t.n, t.r)
    votes = enumerate_votes(config)
    out = set()
    for combo in itertools.combinations_with_replacement(votes, t.N):
        if suff_stat(Dataset(combo, config)) == t:
            out.add(FiberElement.of(combo))
    return sorted(out)


def table_rows():
    text = resources.files("birkhoff").joinpath("data/tables.json").read_text()
    return {tuple(row) for row in json.loads(text)["class_sizes"]["rows"]}


# --- enumeration


def test_worked_fiber_has_six_elements():
    fiber = enumerate_fiber(WORKED.to_stat(6))
    assert len(fiber) == 6
    assert len(set(fiber)) == 6


def test_single_vote_fiber():
    fiber = fiber_of(ds(["c a d"], 5))
    assert fiber == [FiberElement.of([(c, a, d)])]


def test_fiber_elements_satisfy_statistic():
    t = WORKED.to_stat(6)
    A = config_matrix(Config(6, 3))
    index = {v: k for k, v in enumerate(enumerate_votes(Config(6, 3)))}
    for x in enumerate_fiber(t):
        vec = np.zeros(A.shape[1], dtype=np.int64)
        for v in x.votes:
            vec[index[v]] += 1
        assert (A @ vec == t.t.reshape(-1)).all()


@pytest.mark.parametrize("seed", range(12))
def test_fiber_matches_brute_force(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 5)
    r = rng.randint(1, min(3, n))
    N = rng.randint(1, 3)
    t = suff_stat(random_dataset(rng, n, r, N))
    assert enumerate_fiber(t) == brute_fiber(t)


def test_fiber_guards():
    with pytest.raises(TooLargeError):
        enumerate_fiber(suff_stat(ds(["a b c d e f"] * 6, 6)))
    with pytest.raises(PreconditionError):
        enumerate_fiber(SuffStat(np.array([[1, 0], [0, 2]]), 1))


# --- block graphs


def test_block_graph_worked_example():
    g = block_graph(WORKED)
    assert g.components == ((0,), (1, 2))
    assert g.L == 2


def test_block_graph_disjoint_blocks():
    g = block_graph(BlockStat(((a, a), (b, c), (d, e))))
    assert not g.edges
    assert g.L == 2


def test_block_graph_chain():
    g = block_graph(BlockStat(((a, b), (b, c), (c, d))))
    assert g.edges == {(0, 1), (1, 2)}
    assert g.L == 1 and g.connected


def test_block_stat_rejects_overuse():
    with pytest.raises(ValueError):
        BlockStat(((a, a), (a, b)))


def _random_two_vote_stat(rng):
    n = rng.randint(2, 8)
    r = rng.randint(1, min(5, n))
    return suff_stat(random_dataset(rng, n, r, 2))


@pytest.mark.parametrize("seed", range(5))
def test_two_vote_fiber_size_law(seed):
    rng = random.Random(seed)
    for _ in range(100):
        t = _random_two_vote_stat(rng)
        L = block_graph(BlockStat.from_stat(t)).L
        assert len(enumerate_fiber(t)) == two_vote_size(L)


# --- fiber graphs


def test_fiber_graph_worked_example():
    fiber = enumerate_fiber(WORKED.to_stat(6))
    _, comps2 = fiber_graph(fiber, 2)
    _, comps3 = fiber_graph(fiber, 3)
    assert comps3 == 1
    assert comps2 == summarize_fiber(WORKED.to_stat(6)).components
    assert comps2 in (1, 2)


def test_fiber_graph_two_elements():
    fiber = fiber_of(ds(["a c", "b d"], 4))
    assert len(fiber) == 2 and move_degree(*fiber) == 2
    assert fiber_graph(fiber, 2)[1] == 1
    assert fiber_graph(fiber, 1)[1] == 2


def test_fiber_graph_singleton():
    assert fiber_graph(fiber_of(ds(["a b"], 3)), 2)[1] == 1


@pytest.mark.parametrize("seed", range(6))
def test_low_degree_moves_connect_small_fibers(seed):
    rng = random.Random(seed)
    for _ in range(30):
        n = rng.randint(2, 6)
        r = rng.randint(1, min(4, n))
        fiber = enumerate_fiber(suff_stat(random_dataset(rng, n, r, rng.randint(2, 3))))
        assert fiber_graph(fiber, 3)[1] == 1


# --- equivalence classes


@pytest.mark.parametrize("r", [1, 2, 3])
def test_class_size_table_small_r(r):
    rows = set(class_size_table(r))
    assert rows == {row for row in table_rows() if row[0] == r}


def test_class_size_examples():
    rows = set(class_size_table(2))
    assert (2, 3, 1, 30) in rows and (2, 3, 2, 1) in rows
    assert (3, 4, 2, 144) in set(class_size_table(3))


def test_classify_two_vote_indispensable_iff_L_is_two():
    for cls in classify_equiv(3, 2, connected_only=False):
        L = block_graph(cls.representative).L
        assert cls.indispensable == (L == 2)
        assert cls.fiber_size == two_vote_size(L)


def test_class_sizes_count_distinct_statistics():
    # summing class sizes over n_M-subsets of [n] recounts all 3-vote statistics
    n, r = 4, 2
    config = Config(n, r)
    seen = set()
    for combo in itertools.combinations_with_replacement(enumerate_votes(config), 3):
        seen.add(suff_stat(Dataset(combo, config)).key())
    total = sum(cls.size * comb(n, cls.n_M) for cls in classify_equiv(r, 3, connected_only=False))
    assert total == len(seen)


def test_classify_guards():
    with pytest.raises(TooLargeError):
        classify_equiv(5, 3)
    with pytest.raises(TooLargeError):
        class_size_table(5)
    with pytest.raises(PreconditionError):
        classify_equiv(2, 4)


def test_r4_degree3_classes_by_indispensability():
    classes = [c for c in classify_equiv(4, 3) if c.needs_degree3]
    got = Counter((c.n_M, c.indispensable) for c in classes)
    assert got == {(4, True): 1, (5, True): 13, (5, False): 7, (6, True): 2,
                   (6, False): 12, (7, False): 3}
