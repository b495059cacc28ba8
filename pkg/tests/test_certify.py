import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from werner_lhv import certify, gilbert
from werner_lhv.bloch import build_polyhedron, werner_target
from werner_lhv.errors import DegenerateDecomposition, InvalidParameter, PrecisionInsufficient
from werner_lhv.polytope import ConvexDecomposition, DeterministicStrategy

# 40-digit sympy evaluations of cos^4(pi/2n) nu v0
V_BOUND_N25 = Fraction("0.6828941616156859269947817101220244715346")
KG3_N25 = Fraction("1.464355761417056201161149409834472170130")
V_BOUND_N9 = Fraction("0.5637967583502261719885558197570866158345")


def _random_decomposition(m, count, seed):
    rng = np.random.default_rng(seed)
    strategies = [DeterministicStrategy(rng.choice([-1, 1], m), rng.choice([-1, 1], m))
                  for _ in range(count)]
    w = rng.random(count)
    return ConvexDecomposition(strategies, w / w.sum(), m)


@given(st.integers(1, 20), st.integers(2, 18), st.integers(0, 10**6))
def test_rationalize_exact(count, k, seed):
    d = _random_decomposition(4, count, seed)
    rd = certify.rationalize(d, k)
    assert sum(rd.weights) == 1
    assert all(w > 0 for w in rd.weights)
    kept = [N for N in (math.floor(Fraction(float(w)) * 10**k) for w in d.weights) if N > 0]
    assert list(rd.numerators) == kept


@given(st.integers(1, 12), st.integers(0, 10**6))
def test_point_numerators_exact(count, seed):
    d = _random_decomposition(5, count, seed)
    rd = certify.rationalize(d, 16)
    ref = [[sum(Fraction(N) * int(s.a[x]) * int(s.b[y]) for s, N in zip(rd.strategies, rd.numerators))
            for y in range(5)] for x in range(5)]
    assert rd.point_numerators() == ref


def test_rationalize_degenerate():
    s = DeterministicStrategy([1, 1], [1, 1])
    with pytest.raises(DegenerateDecomposition):
        certify.rationalize(ConvexDecomposition([s], np.array([1e-20]), 2), 3)


def _residual_reference(n, v0, rd):
    """Same sum evaluated with 60-digit mpmath points and exact q_r."""
    poly = build_polyhedron(n)
    P = rd.point_numerators()
    with mpmath.workdps(60):
        U = []
        for i1, i2, s in poly.labels:
            a, b = mpmath.pi * i1 / n, mpmath.pi * i2 / n
            U.append((s * mpmath.cos(a) * mpmath.cos(b), s * mpmath.sin(a) * mpmath.cos(b),
                      s * mpmath.sin(b)))
        v = mpmath.mpf(v0.numerator) / v0.denominator
        tot = mpmath.mpf(0)
        for x in range(rd.m):
            for y in range(rd.m):
                dot = sum(U[x][c] * U[y][c] for c in range(3))
                tot += abs(-v * dot - mpmath.mpf(P[x][y]) / rd.denominator)
        return tot


@pytest.mark.parametrize("n, seed", [(2, 0), (3, 1), (4, 2)])
def test_residual_encloses_reference(n, seed):
    m = build_polyhedron(n).m
    rd = certify.rationalize(_random_decomposition(m, 30, seed), 16)
    v0 = Fraction(1, 3)
    enc = certify.residual_sum(n, v0, rd, 256)
    ref = _residual_reference(n, v0, rd)
    assert enc.width < Fraction(1, 10**60)
    ref = Fraction(mpmath.nstr(ref, 55, min_fixed=-1000, max_fixed=1000))
    tol = Fraction(1, 10**50)
    assert enc.lo - tol <= ref <= enc.hi + tol


@pytest.fixture(scope="module")
def small_run():
    q = werner_target(build_polyhedron(3), 0.5)
    state = gilbert.init(q)
    gilbert.run(state, gilbert.Oracle("heuristic", 20), 1e-4, 10**5)
    return state.decomposition


def test_certify_small_run(small_run, tmp_path):
    cert = certify.certify(3, Fraction(1, 2), Fraction(999, 1000), small_run)
    assert cert.verdict
    assert cert.residual_bound.hi < 1
    # v_bound = cos^4(pi/6) * 0.999 * 0.5 = 0.28096875 exactly
    assert cert.v_bound.contains(Fraction(28096875, 10**8))
    certify.write_certificate(cert, tmp_path / "c.json")
    assert certify.verify_certificate(tmp_path / "c.json")


def test_certify_fails_far_target(small_run):
    # v0 = 1 is far from the decomposed point; the residual exceeds 1
    cert = certify.certify(3, Fraction(1), Fraction(999, 1000), small_run)
    assert not cert.verdict


@pytest.mark.parametrize("nu", [0, 1, Fraction(3, 2)])
def test_nu_range(small_run, nu):
    with pytest.raises(InvalidParameter):
        certify.certify(3, Fraction(1, 2), nu, small_run)


def test_straddling_residual_raises():
    res = certify.Interval(Fraction(99, 100), Fraction(101, 100))
    rd = certify.rationalize(_random_decomposition(3, 2, 0), 4)
    with pytest.raises(PrecisionInsufficient):
        certify.assemble_certificate(2, Fraction(1, 2), Fraction(1, 2), rd, res)


def _near(x, ref, tol=Fraction(1, 10**38)):
    return x.lo - tol <= ref <= x.hi + tol and x.width < tol


def test_bound_intervals_headline_numbers():
    _, v, kg3 = certify.bound_intervals(25, Fraction(689, 1000), Fraction(999, 1000))
    assert _near(v, V_BOUND_N25) and _near(kg3, KG3_N25)
    _, v9, _ = certify.bound_intervals(9, Fraction(3, 5), Fraction(999, 1000))
    assert _near(v9, V_BOUND_N9)


def _sabotage(doc, path, fn):
    doc = json.loads(json.dumps(doc))
    fn(doc)
    path.write_text(json.dumps(doc))
    return certify.verify_certificate(path)


@pytest.mark.parametrize("edit", [
    lambda d: d["strategies"][0].update(weight=str(Fraction(d["strategies"][0]["weight"]) + Fraction(1, 10**16))),
    lambda d: d.update(v0=[1, 1]),
    lambda d: d.update(k=17),
    lambda d: d["v_bound"].update(lower="0.6"),
    lambda d: d.update(verdict=False),
    lambda d: d.update(precision_bits=257),
    lambda d: d.pop("eta_sq"),
])
def test_sabotage_detected(small_run, tmp_path, edit):
    cert = certify.certify(3, Fraction(1, 2), Fraction(999, 1000), small_run)
    assert not _sabotage(certify.certificate_to_dict(cert), tmp_path / "c.json", edit)


def test_sabotage_with_fresh_digest(small_run, tmp_path):
    # a forger who also updates the digest is still caught by the recomputation
    cert = certify.certify(3, Fraction(1, 2), Fraction(999, 1000), small_run)

    def forge(d):
        d["v0"] = [3, 5]
        d["sha256"] = certify._digest(d)
    assert not _sabotage(certify.certificate_to_dict(cert), tmp_path / "c.json", forge)


@pytest.fixture(scope="module")
def small_certificate_bytes(small_run, tmp_path_factory):
    path = tmp_path_factory.mktemp("cert") / "c.json"
    cert = certify.certify(3, Fraction(1, 2), Fraction(999, 1000), small_run)
    certify.write_certificate(cert, path)
    return path.read_bytes()


@settings(max_examples=80)
@given(pos=st.integers(0, 10**9), bit=st.integers(0, 7))
def test_single_bit_flips(small_certificate_bytes, tmp_path_factory, pos, bit):
    raw = bytearray(small_certificate_bytes)
    raw[pos % len(raw)] ^= 1 << bit
    path = tmp_path_factory.mktemp("flip") / "c.json"
    path.write_bytes(bytes(raw))
    assert not certify.verify_certificate(path)
