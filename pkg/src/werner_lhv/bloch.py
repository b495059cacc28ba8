"""Measurement directions, the polyhedron family and Werner correlation targets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import InternalInconsistency, InvalidParameter, SolverError
from .intervals import Interval, cos_power, iv, iv_precision

ETA_BITS = 160
DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @classmethod
    def from_array(cls, v) -> "BlochVector":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "BlochVector") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def is_unit(self, tol: float = 1e-12) -> bool:
        return abs(self.dot(self) - 1.0) <= tol

    def __neg__(self) -> "BlochVector":
        return BlochVector(-self.x, -self.y, -self.z)


@dataclass(frozen=True)
class MeasurementPolyhedron:
    """One representative per antipodal pair of the ``n``-polyhedron.

    ``labels[v] = (i1, i2, sign)`` records which grid direction a vertex came
    from, so that exact code can rebuild the same vertices in any arithmetic.
    """

    n: int
    vertices: np.ndarray = field(repr=False)
    labels: tuple
    eta: Interval

    @property
    def m(self) -> int:
        return len(self.vertices)

    @property
    def eta_expression(self) -> str:
        return f"cos(pi/{2 * self.n})**2"

    def bloch_vectors(self) -> list[BlochVector]:
        return [BlochVector.from_array(v) for v in self.vertices]

    def signed_vertices(self) -> np.ndarray:
        """All ``2 m`` vertices: the representatives followed by their antipodes."""
        return np.vstack([self.vertices, -self.vertices])


def grid_direction(n: int, i1: int, i2: int) -> np.ndarray:
    a, b = i1 * math.pi / n, i2 * math.pi / n
    return np.array([math.cos(a) * math.cos(b), math.sin(a) * math.cos(b), math.sin(b)])


def _canonical_sign(v: np.ndarray) -> int:
    for c in v:
        if abs(c) > DEDUP_TOL:
            return 1 if c > 0 else -1
    return 1


def expected_setting_count(n: int) -> int:
    return n * n if n % 2 else n * n - n + 1


def shrinking_factor(n: int, bits: int = ETA_BITS) -> Interval:
    """Certified enclosure of ``cos(pi/2n)**2``."""
    if n < 2:
        raise InvalidParameter(f"n must be >= 2, got {n}")
    return cos_power(n, 2, max(bits, 128))


def build_polyhedron(n: int) -> MeasurementPolyhedron:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidParameter(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    verts, labels = [], []
    for i1 in range(n):
        for i2 in range(n):
            u = grid_direction(n, i1, i2)
            s = _canonical_sign(u)
            u = s * u
            if any(np.max(np.abs(u - w)) <= DEDUP_TOL for w in verts):
                continue
            verts.append(u)
            labels.append((i1, i2, s))
    vertices = np.array(verts)
    if len(vertices) != expected_setting_count(n):
        raise InternalInconsistency(
            f"n={n}: built {len(vertices)} settings, expected {expected_setting_count(n)}")
    return MeasurementPolyhedron(n, vertices, tuple(labels), shrinking_factor(n))


def interval_vertices(poly: MeasurementPolyhedron, bits: int) -> list:
    """Vertices as mpmath interval triples at ``bits`` precision."""
    out = []
    with iv_precision(bits):
        for i1, i2, s in poly.labels:
            a = iv.pi * i1 / poly.n
            b = iv.pi * i2 / poly.n
            out.append((s * iv.cos(a) * iv.cos(b), s * iv.sin(a) * iv.cos(b), s * iv.sin(b)))
    return out


def _max_scale(signed: np.ndarray, u: np.ndarray) -> float:
    """Largest ``s`` such that ``s u`` lies in the convex hull of ``signed``."""
    k = len(signed)
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_eq = np.zeros((4, k + 1))
    A_eq[:3, :k] = signed.T
    A_eq[:3, -1] = -u
    A_eq[3, :k] = 1.0
    b_eq = np.array([0.0, 0.0, 0.0, 1.0])
    bounds = [(0, None)] * k + [(None, None)]
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverError(f"gauge LP failed: {res.message}")
    return float(res.x[-1])


def midpoint_direction(n: int) -> np.ndarray:
    """Direction halfway between two neighbouring grid planes and two grid vertices."""
    h = math.pi / (2 * n)
    return np.array([math.cos(h) * math.cos(h), math.sin(h) * math.cos(h), math.sin(h)])


def verify_shrinking(poly: MeasurementPolyhedron, samples: int = 100, seed: int = 0,
                     witness_margin: float = 1e-6) -> dict:
    """Check that ``eta * u`` is in the hull of the signed vertices for random ``u``.

    Returns ``max_violation`` (largest ``eta - s_max(u)``, floored at 0), the
    hull gauge at the midpoint direction and whether ``(eta + margin) * u*`` is
    outside the hull.
    """
    if samples < 1:
        raise InvalidParameter("samples must be >= 1")
    rng = np.random.default_rng(seed)
    signed = poly.signed_vertices()
    eta = float(poly.eta.hi)
    worst = 0.0
    for _ in range(samples):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        worst = max(worst, eta - _max_scale(signed, u))
    mid_scale = _max_scale(signed, midpoint_direction(poly.n))
    return {
        "max_violation": max(worst, 0.0),
        "samples": samples,
        "eta": eta,
        "midpoint_scale": mid_scale,
        "witness_infeasible": eta + witness_margin > mid_scale,
    }


def decompose_direction(poly: MeasurementPolyhedron, u) -> np.ndarray:
    """Convex weights over the signed vertices reproducing ``eta * u``.

    Entry ``v`` (``v < m``) weights ``+vertex[v]``; entry ``m + v`` weights
    ``-vertex[v]``.
    """
    u = np.asarray(u.as_array() if isinstance(u, BlochVector) else u, dtype=float)
    if abs(u @ u - 1.0) > 1e-9:
        raise InvalidParameter("u must be a unit vector")
    signed = poly.signed_vertices()
    target = poly.eta.mid * u
    A_eq = np.vstack([signed.T, np.ones(len(signed))])
    b_eq = np.append(target, 1.0)
    res = linprog(np.zeros(len(signed)), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * len(signed), method="highs")
    if res.status != 0:
        raise InternalInconsistency(f"eta*u not in the hull: {res.message}")
    w = np.clip(res.x, 0.0, None)
    # polish with nonnegative least squares, on the LP support first
    for cols in (np.flatnonzero(w > 1e-12), np.arange(len(w))):
        sol, _ = nnls(A_eq[:, cols], b_eq)
        if np.linalg.norm(A_eq[:, cols] @ sol - b_eq) <= 1e-12:
            w = np.zeros_like(w)
            w[cols] = sol
            break
    w /= w.sum()
    if np.linalg.norm(w @ signed - target) > 1e-10:
        raise InternalInconsistency("direction decomposition residual above 1e-10")
    return w


def werner_target(poly: MeasurementPolyhedron, v: float) -> np.ndarray:
    """Correlation matrix ``q(x, y) = -v u_x . u_y``."""
    if not 0.0 <= v <= 1.0:
        raise InvalidParameter(f"visibility must lie in [0, 1], got {v}")
    U = poly.vertices
    q = -float(v) * (U @ U.T)
    np.fill_diagonal(q, -float(v))
    return np.clip(q, -1.0, 1.0)


def quantum_probability(v: float, x, y, a: int, b: int) -> float:
    """p(a, b | x, y) for projective measurements along ``x`` and ``y`` on rho(v)."""
    if not 0.0 <= v <= 1.0:
        raise InvalidParameter(f"visibility must lie in [0, 1], got {v}")
    if a not in (1, -1) or b not in (1, -1):
        raise InvalidParameter("outcomes are +1 or -1")
    xv = x.as_array() if isinstance(x, BlochVector) else np.asarray(x, dtype=float)
    yv = y.as_array() if isinstance(y, BlochVector) else np.asarray(y, dtype=float)
    return (1.0 - a * b * v * float(xv @ yv)) / 4.0


# --- file formats ---------------------------------------------------------

def write_polyhedron(poly: MeasurementPolyhedron, path) -> None:
    doc = {
        "n": poly.n,
        "m": poly.m,
        "eta": poly.eta_expression,
        "vertices": [[format(c, ".17g") for c in v] for v in poly.vertices],
        "labels": [list(lab) for lab in poly.labels],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_polyhedron(path) -> MeasurementPolyhedron:
    doc = json.loads(Path(path).read_text())
    poly = build_polyhedron(int(doc["n"]))
    stored = np.array([[float(c) for c in v] for v in doc["vertices"]])
    if stored.shape != poly.vertices.shape or np.max(np.abs(stored - poly.vertices)) > 1e-15:
        raise ValueError(f"{path}: vertices do not match the n={poly.n} polyhedron")
    return poly


def write_correlation_csv(q: np.ndarray, path) -> None:
    m = q.shape[0]
    lines = [f"m={m}"]
    lines += [",".join(format(c, ".17g") for c in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n")


def read_correlation_csv(path) -> np.ndarray:
    lines = Path(path).read_text().split()
    head = lines[0]
    if not head.startswith("m="):
        raise ValueError(f"{path}: missing 'm=<int>' header")
    m = int(head[2:])
    q = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    if q.shape != (m, m):
        raise ValueError(f"{path}: expected {m}x{m} entries, got {q.shape}")
    if np.any(np.abs(q) > 1.0):
        raise ValueError(f"{path}: correlation entries must lie in [-1, 1]")
    return q
