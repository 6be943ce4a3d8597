import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birkhoff.basis import (
    CountPolynomial,
    Move,
    all_low_degree_moves,
    count_formula,
    derived_count_polynomial,
    enumerate_basis_moves,
    extend_to_permutation,
    minimal_basis_counts,
    random_move,
    shuffle_move,
)
from birkhoff.errors import PreconditionError, TooLargeError, UnsupportedError
from birkhoff.fiber import enumerate_fiber, fiber_graph_moves
from birkhoff.model import Config, suff_stat

from _helpers import random_dataset

a, b, c, d = range(4)
CYCLE_MOVE = Move.between([(a, b), (b, c), (c, a)], [(a, c), (c, b), (b, a)])


# --- count polynomials


def test_count_formula_examples():
    assert count_formula(2, 2)(10) == 1260
    assert count_formula(4, 3)(9) == 15046080
    assert count_formula(3, 2)(5) == 360
    for r in (2, 3, 4, 5):
        for deg in (2, 3):
            assert count_formula(r, deg)(r - 1) == 0


def test_count_formula_unsupported():
    with pytest.raises(UnsupportedError):
        count_formula(6, 2)
    with pytest.raises(UnsupportedError):
        count_formula(3, 4)


def test_count_polynomial_str():
    assert str(CountPolynomial(((4, 6),))) == "6*C(n,4)"
    assert str(CountPolynomial(())) == "0"


@pytest.mark.parametrize("n,r,deg,expected", [
    (4, 2, 2, 6), (5, 3, 2, 360), (5, 4, 2, 1050), (3, 2, 3, 1), (4, 3, 3, 160),
])
def test_minimal_basis_counts_examples(n, r, deg, expected):
    assert minimal_basis_counts(n, r, deg) == expected


def test_minimal_basis_counts_r_above_n():
    assert minimal_basis_counts(2, 3, 2) == 0


def test_minimal_basis_counts_guards():
    with pytest.raises(PreconditionError):
        minimal_basis_counts(4, 2, 4)
    with pytest.raises(TooLargeError):
        minimal_basis_counts(9, 5, 3)


@pytest.mark.parametrize("r,deg", [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3), (4, 3)])
def test_derived_polynomial_matches_brute_force(r, deg):
    poly = derived_count_polynomial(r, deg)
    for n in range(r, r + 3):
        if deg == 3 and r == 4 and n > 5:
            break
        assert poly(n) == minimal_basis_counts(n, r, deg)


@pytest.mark.parametrize("r,deg", [(2, 2), (3, 2), (2, 3), (3, 3), (4, 3)])
def test_stored_polynomial_matches_derivation(r, deg):
    assert derived_count_polynomial(r, deg) == count_formula(r, deg)


@pytest.mark.parametrize("r", [4, 5])
def test_stored_degree2_polynomials_disagree_from_six_candidates(r):
    # the stored values follow the published table; brute force gives more
    # moves once six or more candidates are available
    derived, stored = derived_count_polynomial(r, 2), count_formula(r, 2)
    for n in range(1, 6):
        assert derived(n) == stored(n)
    assert derived(6) == {4: 19530, 5: 57150}[r]
    assert stored(6) == {4: 16650, 5: 46350}[r]


def test_brute_force_at_six_candidates_r4():
    assert minimal_basis_counts(6, 4, 2) == 19530


# --- basis moves


def test_basis_n3_r2_is_single_cycle_move():
    moves = enumerate_basis_moves(3, 2)
    assert moves == {CYCLE_MOVE.canonical()}
    (m,) = moves
    assert m.degree == 3


def test_basis_n4_r2_counts():
    moves = enumerate_basis_moves(4, 2)
    degrees = sorted(m.degree for m in moves)
    assert degrees.count(2) == 6 and degrees.count(3) == 4


@pytest.mark.parametrize("n,r", [(3, 2), (4, 2), (4, 3), (5, 2)])
def test_basis_moves_in_kernel(n, r):
    config = Config(n, r)
    for m in enumerate_basis_moves(n, r):
        assert m.in_kernel(config)
        assert m.degree <= 3
        assert m == m.canonical()


@pytest.mark.parametrize("seed", range(10))
def test_basis_connects_fibers(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 5)
    r = rng.randint(2, 3)
    moves = [m.as_dict() for m in enumerate_basis_moves(n, r)]
    for _ in range(5):
        N = rng.randint(2, 5)
        fiber = enumerate_fiber(suff_stat(random_dataset(rng, n, r, N)))
        _, comps = fiber_graph_moves(fiber, moves)
        assert comps == 1


# --- moves


def test_move_canonical_is_sign_invariant():
    assert CYCLE_MOVE.canonical() == (-CYCLE_MOVE).canonical()
    assert CYCLE_MOVE.canonical().canonical() == CYCLE_MOVE.canonical()


def test_move_text_round_trip():
    m = CYCLE_MOVE.canonical()
    assert Move.parse(str(m)) == m
    assert str(m).startswith("+(")


def test_move_apply():
    m = CYCLE_MOVE
    start = {(a, b): 1, (b, c): 1, (c, a): 1}
    out = m.apply(start)
    assert out == {(a, c): 1, (c, b): 1, (b, a): 1}
    assert m.apply({(a, b): 1}) is None


def test_zero_move_is_falsy():
    assert not Move.between([(a, b)], [(a, b)])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_move_in_kernel(seed):
    rng = np.random.default_rng(seed)
    config = Config(4, 2)
    m = random_move(rng, config, int(rng.integers(2, 4)))
    if m is not None:
        assert m.in_kernel(config)
        assert 0 < m.degree <= 3


def test_random_move_many_draws():
    rng = np.random.default_rng(0)
    config = Config(4, 2)
    seen = 0
    for _ in range(20_000):
        m = random_move(rng, config, 3)
        if m is not None:
            seen += 1
            assert m.in_kernel(config) and m.degree <= 3
    assert seen > 0


def test_shuffle_move_can_produce_cycle_move():
    start = [(a, b), (b, c), (c, a)]
    found = set()
    rng = np.random.default_rng(1)
    for _ in range(500):
        m = shuffle_move(rng, start)
        if m is not None:
            found.add(m.canonical())
    assert CYCLE_MOVE.canonical() in found


def test_shuffle_move_identity_is_none():
    # a single vote admits only the identity shuffle
    assert shuffle_move(np.random.default_rng(0), [(a, b)]) is None


# --- completing votes to permutations


def test_extend_to_permutation():
    assert extend_to_permutation((2, 0), 3) == (2, 0, 1)
    with pytest.raises(PreconditionError):
        extend_to_permutation((0,), 3)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_low_degree_moves_agree_with_full_permutations(n):
    short = all_low_degree_moves(Config(n, n - 1))
    full = all_low_degree_moves(Config(n, n))
    mapped = {
        Move.from_map({extend_to_permutation(v, n): k for v, k in m.z}).canonical()
        for m in short
    }
    assert mapped == full


def test_vote_extension_is_bijective():
    n = 4
    images = {extend_to_permutation(v, n) for v in itertools.permutations(range(n), n - 1)}
    assert images == set(itertools.permutations(range(n)))
