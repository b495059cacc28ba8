"""Exact locality certificates and the resulting visibility bounds.

A floating-point decomposition ``q_eps = sum_l w_l D_l`` is truncated to
``k`` decimals and renormalised, giving a rational local point ``q_r``.  With
``x = nu/(1-nu) (q - q_r)``, ``nu q = nu q_r + (1-nu) x`` is local as soon as
``sum |x| < 1``; the target ``q`` itself is rebuilt from ``(n, v0)`` with
interval arithmetic, so the check does not trust the numerical run.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import build_polyhedron, interval_vertices
from .errors import DegenerateDecomposition, InvalidParameter, PrecisionInsufficient
from .intervals import (Interval, cos_power, interval_from_record, interval_to_record, iv,
                        iv_precision)
from .polytope import ConvexDecomposition, DeterministicStrategy

DEFAULT_K = 16
DEFAULT_NU = Fraction(999, 1000)
DEFAULT_PRECISION_BITS = 256
MAX_PRECISION_BITS = 4096
FORMAT = "werner-lhv-certificate/1"

log = logging.getLogger(__name__)


def default_precision_bits() -> int:
    return int(os.environ.get("WERNER_LHV_PRECISION_BITS", DEFAULT_PRECISION_BITS))


@dataclass(frozen=True)
class RationalDecomposition:
    """Truncated weights ``N_l / 10**k`` and their exact renormalisation."""

    strategies: tuple
    numerators: tuple   # N_l = floor(10**k w_l) > 0
    k: int
    m: int

    @property
    def denominator(self) -> int:
        return sum(self.numerators)

    @property
    def weights(self) -> list[Fraction]:
        den = self.denominator
        return [Fraction(N, den) for N in self.numerators]

    def truncated_weights(self) -> list[Fraction]:
        return [Fraction(N, 10 ** self.k) for N in self.numerators]

    def point_numerators(self) -> list[list[int]]:
        """Integer matrix ``P`` with ``q_r = P / denominator`` exactly."""
        A = np.array([s.a for s in self.strategies], dtype=np.int64)
        B = np.array([s.b for s in self.strategies], dtype=np.int64)
        # split N = hi * 2**32 + lo so the int64 products cannot overflow
        N = [int(x) for x in self.numerators]
        hi = np.array([x >> 32 for x in N], dtype=np.int64)
        lo = np.array([x & 0xFFFFFFFF for x in N], dtype=np.int64)
        if len(N) >= 1 << 30 or max(N) >= 1 << 62:
            raise InvalidParameter("decomposition too large for exact accumulation")
        P_hi = (A * hi[:, None]).T @ B
        P_lo = (A * lo[:, None]).T @ B
        return [[(int(P_hi[x, y]) << 32) + int(P_lo[x, y]) for y in range(self.m)]
                for x in range(self.m)]

    def point(self) -> list[list[Fraction]]:
        den = self.denominator
        return [[Fraction(p, den) for p in row] for row in self.point_numerators()]


def rationalize(d: ConvexDecomposition, k: int = DEFAULT_K) -> RationalDecomposition:
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    scale = 10 ** k
    strategies, nums = [], []
    for s, w in zip(d.strategies, d.weights):
        w = float(w)
        if not math.isfinite(w) or w < 0:
            raise InvalidParameter(f"weights must be finite and nonnegative, got {w}")
        N = math.floor(Fraction(w) * scale)
        if N > 0:
            strategies.append(s)
            nums.append(N)
    if not nums:
        raise DegenerateDecomposition("every weight truncates to zero")
    return RationalDecomposition(tuple(strategies), tuple(nums), k, d.m)


def _check_nu(nu: Fraction) -> Fraction:
    nu = Fraction(nu)
    if not 0 < nu < 1:
        raise InvalidParameter(f"nu must satisfy 0 < nu < 1, got {nu}")
    return nu


def residual_sum(n: int, v0: Fraction, rd: RationalDecomposition, precision_bits: int) -> Interval:
    """Enclosure of ``sum_{x,y} |q(x,y) - q_r(x,y)|`` with ``q = -v0 u_x . u_y``."""
    poly = build_polyhedron(n)
    if poly.m != rd.m:
        raise InvalidParameter(f"decomposition has m={rd.m}, polyhedron n={n} has m={poly.m}")
    v0 = Fraction(v0)
    P = rd.point_numerators()
    den = rd.denominator
    with iv_precision(precision_bits):
        U = interval_vertices(poly, precision_bits)
        neg_v0 = -iv.mpf(v0.numerator) / v0.denominator
        ivden = iv.mpf(den)
        total = iv.mpf(0)
        for x in range(rd.m):
            ux = U[x]
            for y in range(rd.m):
                uy = U[y]
                if x == y:
                    q = neg_v0  # unit vectors: u.u = 1 exactly
                else:
                    q = neg_v0 * (ux[0] * uy[0] + ux[1] * uy[1] + ux[2] * uy[2])
                total += abs(q - iv.mpf(P[x][y]) / ivden)
        return Interval.from_iv(total)


def certified_residual(n: int, v0: Fraction, rd: RationalDecomposition, nu: Fraction,
                       precision_bits: int | None = None) -> Interval:
    """Enclosure of ``nu/(1-nu) * sum |q - q_r|``.

    Raises :class:`PrecisionInsufficient` when the enclosure contains 1.
    """
    nu = _check_nu(nu)
    bits = precision_bits or default_precision_bits()
    res = residual_sum(n, v0, rd, bits) * (nu / (1 - nu))
    if res.lo < 1 <= res.hi:
        raise PrecisionInsufficient(f"residual enclosure {res} straddles 1 at {bits} bits")
    return res


@dataclass
class Certificate:
    n: int
    m: int
    v0: Fraction
    nu: Fraction
    rd: RationalDecomposition
    precision_bits: int
    residual_bound: Interval
    eta_sq: Interval
    v_bound: Interval
    kg3_bound: Interval
    verdict: bool


def bound_intervals(n: int, v0: Fraction, nu: Fraction, bits: int = DEFAULT_PRECISION_BITS):
    """``(cos^4(pi/2n), cos^4(pi/2n) nu v0, 1 / that)`` as rigorous intervals."""
    eta_sq = cos_power(n, 4, bits)
    v_bound = eta_sq * (Fraction(nu) * Fraction(v0))
    return eta_sq, v_bound, v_bound.reciprocal()


def assemble_certificate(n: int, v0: Fraction, nu: Fraction, rd: RationalDecomposition,
                         residual: Interval, precision_bits: int = DEFAULT_PRECISION_BITS
                         ) -> Certificate:
    if residual.lo < 1 <= residual.hi:
        raise PrecisionInsufficient("residual verdict is indeterminate")
    v0, nu = Fraction(v0), _check_nu(nu)
    eta_sq, v_bound, kg3 = bound_intervals(n, v0, nu, precision_bits)
    return Certificate(n, rd.m, v0, nu, rd, precision_bits, residual, eta_sq, v_bound, kg3,
                       verdict=residual.hi < 1)


def certify(n: int, v0: Fraction, nu: Fraction, d: ConvexDecomposition, k: int = DEFAULT_K,
            precision_bits: int | None = None) -> Certificate:
    """Rationalise, bound the residual (doubling precision as needed) and assemble."""
    rd = rationalize(d, k)
    bits = precision_bits or default_precision_bits()
    while True:
        try:
            res = certified_residual(n, v0, rd, nu, bits)
            break
        except PrecisionInsufficient:
            if bits >= MAX_PRECISION_BITS:
                raise
            bits *= 2
    return assemble_certificate(n, v0, nu, rd, res, bits)


# --- certificate files ----------------------------------------------------

def _weight_str(N: int, k: int) -> str:
    return str(Decimal(N).scaleb(-k))


def _digest(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "sha256"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def certificate_to_dict(cert: Certificate) -> dict:
    rd = cert.rd
    records = []
    for s, N in zip(rd.strategies, rd.numerators):
        a_hex, b_hex = s.to_hex()
        records.append({"a": a_hex, "b": b_hex, "weight": _weight_str(N, rd.k)})
    doc = {
        "format": FORMAT,
        "tool_version": __version__,
        "n": cert.n,
        "m": cert.m,
        "v0": [cert.v0.numerator, cert.v0.denominator],
        "nu": [cert.nu.numerator, cert.nu.denominator],
        "k": rd.k,
        "precision_bits": cert.precision_bits,
        "norm": "euclidean",
        "weight_sum": _weight_str(rd.denominator, rd.k),
        "strategies": records,
        "residual_bound": interval_to_record(cert.residual_bound),
        "eta_sq": interval_to_record(cert.eta_sq),
        "v_bound": interval_to_record(cert.v_bound),
        "kg3_bound": interval_to_record(cert.kg3_bound),
        "verdict": cert.verdict,
    }
    doc["sha256"] = _digest(doc)
    return doc


def write_certificate(cert: Certificate, path) -> None:
    Path(path).write_text(json.dumps(certificate_to_dict(cert), indent=1) + "\n")


class CertificateFormatError(ValueError):
    pass


def _parse_weight(text: str, k: int, where: str) -> int:
    try:
        w = Fraction(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise CertificateFormatError(f"{where}: weight {text!r} is not a decimal") from exc
    N = w * 10 ** k
    if N.denominator != 1:
        return -1  # more than k decimals: rejected by the caller
    return int(N)


def _read_doc(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:  # includes JSON and UTF-8 decoding errors
        raise CertificateFormatError(f"cannot parse certificate {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CertificateFormatError("certificate must be a JSON object")
    for key in ("sha256", "format", "n", "m", "v0", "nu", "k", "precision_bits", "weight_sum",
                "strategies", "residual_bound", "eta_sq", "v_bound", "kg3_bound", "verdict"):
        if key not in doc:
            raise CertificateFormatError(f"missing field {key!r}")
    if doc["format"] != FORMAT:
        raise CertificateFormatError(f"unknown format {doc['format']!r}")
    return doc


def _decode(doc: dict) -> RationalDecomposition:
    try:
        m, k = int(doc["m"]), int(doc["k"])
    except (TypeError, ValueError) as exc:
        raise CertificateFormatError(f"bad m or k: {exc}") from exc
    if not isinstance(doc["strategies"], list):
        raise CertificateFormatError("strategies must be a list")
    strategies, nums = [], []
    for i, rec in enumerate(doc["strategies"]):
        try:
            strategies.append(DeterministicStrategy.from_hex(rec["a"], rec["b"], m))
        except (KeyError, TypeError, ValueError) as exc:
            raise CertificateFormatError(f"strategy record {i}: {exc}") from exc
        nums.append(_parse_weight(rec.get("weight"), k, f"strategy record {i}"))
    return RationalDecomposition(tuple(strategies), tuple(nums), k, m)


def load_certificate(path) -> tuple[dict, RationalDecomposition]:
    """Parse a certificate file; format problems name the offending record."""
    doc = _read_doc(path)
    return doc, _decode(doc)


def verify_certificate(path) -> bool:
    """Recompute everything in a certificate file from scratch.

    Returns False on any mismatch between the stored and recomputed data,
    and on files that do not parse.
    """
    try:
        doc = _read_doc(path)
        if doc["sha256"] != _digest(doc):
            log.warning("certificate digest mismatch")
            return False
        return _recheck(doc, _decode(doc))
    except (ValueError, TypeError, ArithmeticError) as exc:  # CertificateFormatError included
        log.warning("certificate rejected: %s", exc)
        return False


def _recheck(doc: dict, rd: RationalDecomposition) -> bool:
    n, m = int(doc["n"]), int(doc["m"])
    if build_polyhedron(n).m != m:
        return False
    if any(N <= 0 for N in rd.numerators):
        return False
    if _parse_weight(doc["weight_sum"], rd.k, "weight_sum") != rd.denominator:
        return False
    if sum(rd.weights) != 1:
        return False
    v0 = Fraction(*doc["v0"])
    nu = Fraction(*doc["nu"])
    if not (0 <= v0 <= 1 and 0 < nu < 1):
        return False
    bits = int(doc["precision_bits"])
    res = residual_sum(n, v0, rd, bits) * (nu / (1 - nu))
    if res.lo < 1 <= res.hi:
        return False
    eta_sq, v_bound, kg3 = bound_intervals(n, v0, nu, bits)
    expected = {
        "residual_bound": interval_to_record(res),
        "eta_sq": interval_to_record(eta_sq),
        "v_bound": interval_to_record(v_bound),
        "kg3_bound": interval_to_record(kg3),
    }
    for key, rec in expected.items():
        if doc[key] != rec:
            return False
        interval_from_record(doc[key])
    return doc["verdict"] is True and res.hi < 1
