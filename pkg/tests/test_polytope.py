import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from werner_lhv import polytope as pt
from werner_lhv.errors import SizeLimitError


def brute_force_max(G):
    m = G.shape[0]
    best = -math.inf
    for a in itertools.product((-1, 1), repeat=m):
        for b in itertools.product((-1, 1), repeat=m):
            best = max(best, pt.overlap(G, np.array(a), np.array(b)))
    return best


def matrices(max_m=5):
    return st.integers(1, max_m).flatmap(
        lambda m: arrays(float, (m, m), elements=st.floats(-1, 1, allow_subnormal=False)))


@given(matrices(4))
def test_exact_oracle_matches_brute_force(G):
    s, S = pt.exact_oracle(G)
    assert S == brute_force_max(G)
    assert S == pt.overlap(G, s.a, s.b)


@given(matrices(7), st.integers(0, 2**32))
def test_heuristic_never_beats_exact(G, seed):
    _, S_h = pt.heuristic_oracle(G, restarts=10, seed=seed)
    _, S_e = pt.exact_oracle(G)
    assert S_h <= S_e


@given(matrices(8), st.integers(0, 1000))
def test_compiled_kernel_matches_reference(G, seed):
    a1, b1 = pt.heuristic_signs(G, 20, seed)
    a2, b2 = pt.heuristic_signs(G, 20, seed, reference=True)
    assert pt.overlap(G, a1, b1) == pt.overlap(G, a2, b2)


def test_heuristic_is_seed_deterministic():
    G = np.random.default_rng(3).normal(size=(30, 30))
    assert pt.heuristic_oracle(G, 50, 7)[0] == pt.heuristic_oracle(G, 50, 7)[0]


def test_heuristic_all_zero_matrix():
    s, S = pt.heuristic_oracle(np.zeros((4, 4)), restarts=5)
    assert S == 0.0
    assert np.all(s.b == -1)  # zero is not > 0


def test_heuristic_rank_one():
    v = np.array([1.0, -2.0, 0.5, 3.0])
    _, S = pt.heuristic_oracle(np.outer(v, v), restarts=3)
    assert S == pytest.approx(np.abs(v).sum() ** 2)


def test_exact_oracle_size_limit():
    with pytest.raises(SizeLimitError):
        pt.exact_oracle(np.zeros((pt.EXACT_MAX_M + 1,) * 2))


def test_restarts_must_be_positive():
    with pytest.raises(ValueError):
        pt.heuristic_oracle(np.eye(3), restarts=0)


@given(st.integers(1, 40), st.integers(0, 2**31))
def test_hex_round_trip(m, seed):
    rng = np.random.default_rng(seed)
    s = pt.DeterministicStrategy(rng.choice([-1, 1], m), rng.choice([-1, 1], m))
    a_hex, b_hex = s.to_hex()
    assert pt.DeterministicStrategy.from_hex(a_hex, b_hex, m) == s


def test_hex_rejects_padding_and_length():
    with pytest.raises(ValueError):
        pt.DeterministicStrategy.from_hex("ff", "00", 3)  # padding bits set
    with pytest.raises(ValueError):
        pt.DeterministicStrategy.from_hex("0000", "00", 3)


def test_strategy_rejects_non_signs():
    with pytest.raises(ValueError):
        pt.DeterministicStrategy([1, 0], [1, 1])


def test_canonical_representative():
    s = pt.DeterministicStrategy([-1, 1], [1, 1])
    c = s.canonical()
    assert c.a[0] == 1
    assert np.array_equal(pt.vertex_matrix(c), pt.vertex_matrix(s))


def test_decomposition_point():
    s1 = pt.DeterministicStrategy([1, 1], [1, 1])
    s2 = pt.DeterministicStrategy([-1, 1], [1, 1])
    d = pt.ConvexDecomposition([s1, s2], np.array([0.5, 0.5]), 2)
    assert np.array_equal(d.point(), [[0, 0], [1, 1]])


@given(st.integers(1, 6).flatmap(
    lambda m: arrays(float, (m, m), elements=st.floats(-1, 1))))
def test_l1_check_reconstructs(z):
    total = np.abs(z).sum()
    if total >= 1:
        z = z / (2 * total)
    res = pt.l1_local_check(z)
    assert res.is_certified_local
    assert np.all(res.e_weights >= 0) and res.e0_weight >= 0
    assert math.isclose(res.weight_sum(), 1.0, abs_tol=1e-15)
    assert np.max(np.abs(res.reconstruct() - z)) <= 1e-15


def test_l1_check_rejects_large():
    assert not pt.l1_local_check(np.eye(2)).is_certified_local
