"""Decomposing noisy extremal qubit POVMs into projective measurements.

An element is stored as ``(a_i, vec_a_i)`` meaning ``a_i 1 + vec_a_i . sigma``;
the noisy POVM at noise parameter ``mu`` replaces ``vec_a_i`` by
``mu vec_a_i``.  A projective measurement along ``b`` assigned to outcome
pair ``(i, j)`` contributes ``(1 + b.sigma)/2`` to element ``i`` and
``(1 - b.sigma)/2`` to element ``j``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InternalInconsistency, InvalidParameter
from .intervals import Interval

ZERO_TOL = 1e-12
ROOT_TOL = 1e-14
GRID = 64
MU_CRIT_4 = math.sqrt(2.0 / 3.0)
MU_CRIT_3 = math.sqrt(3.0) / 2.0


@dataclass
class Povm:
    a: np.ndarray      # (k,) scalar parts
    vecs: np.ndarray   # (k, 3) Bloch parts

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.vecs = np.asarray(self.vecs, dtype=float).reshape(len(self.a), 3)

    def __len__(self):
        return len(self.a)

    def nonzero(self) -> list[int]:
        return [i for i in range(len(self)) if self.a[i] > ZERO_TOL]

    def noisy(self, mu: float) -> tuple[np.ndarray, np.ndarray]:
        return self.a.copy(), mu * self.vecs

    def is_projective(self, tol: float = 1e-10) -> bool:
        idx = self.nonzero()
        if len(idx) != 2:
            return False
        i, j = idx
        return (abs(self.a[i] - 0.5) <= tol and abs(self.a[j] - 0.5) <= tol
                and np.max(np.abs(self.vecs[i] + self.vecs[j])) <= tol)


def validate_povm(p: Povm, tol: float = 1e-12) -> bool:
    if len(p) == 0 or len(p) > 4 or np.any(p.a < -tol):
        return False
    norms = np.linalg.norm(p.vecs, axis=1)
    return bool(np.all(np.abs(p.a - norms) <= tol)
                and abs(p.a.sum() - 1.0) <= tol
                and np.all(np.abs(p.vecs.sum(axis=0)) <= tol))


def _cos_between(p: Povm, i: int, j: int) -> float:
    c = float(p.vecs[i] @ p.vecs[j]) / (p.a[i] * p.a[j])
    return min(1.0, max(-1.0, c))


def find_pair(p: Povm) -> tuple[int, int, float]:
    """Pair of nonzero elements with the most negative normalised overlap.

    Four nonzero elements always have a pair at or below -1/3, three at or
    below -1/2 and two are antipodal; anything else raises.
    """
    idx = p.nonzero()
    if len(idx) < 2:
        raise InvalidParameter("need at least two nonzero elements")
    best = None
    for i, j in itertools.combinations(idx, 2):
        c = _cos_between(p, i, j)
        if best is None or c < best[2]:
            best = (i, j, c)
    bound = {2: -1.0, 3: -0.5, 4: -1.0 / 3.0}[len(idx)]
    if best[2] > bound + 1e-9:
        raise InternalInconsistency(
            f"{len(idx)} nonzero elements but best pair cosine {best[2]:.6g} > {bound:.6g}")
    return best


@dataclass
class PeelStep:
    p: float
    b: np.ndarray
    pair: tuple[int, int]
    residual: Povm | None
    theta1: float
    theta2: float
    theta12: float

    @property
    def peeled(self) -> bool:
        return self.p > 0


def _roots(g, lo: float, hi: float) -> list[float]:
    xs = np.linspace(lo, hi, GRID + 1)
    gs = [g(x) for x in xs]
    roots = []
    for k in range(GRID):
        g0, g1 = gs[k], gs[k + 1]
        if g0 == 0.0:
            roots.append(float(xs[k]))
            continue
        if g0 * g1 < 0:
            a, b = float(xs[k]), float(xs[k + 1])
            ga = g0
            while b - a > ROOT_TOL:
                c = 0.5 * (a + b)
                gc = g(c)
                if gc == 0.0:
                    a = b = c
                    break
                if (gc < 0) == (ga < 0):
                    a, ga = c, gc
                else:
                    b = c
            roots.append(0.5 * (a + b))
    if gs[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def _orthonormal_to(u: np.ndarray) -> np.ndarray:
    e = np.eye(3)[int(np.argmin(np.abs(u)))]
    f = e - (e @ u) * u
    return f / np.linalg.norm(f)


def peel(p: Povm, mu: float, pair: tuple[int, int]) -> PeelStep:
    """Extract one projective measurement from ``M(mu)`` on outcome ``pair``.

    Solves ``a_i (sin t1 - mu) = a_j (sin t2 - mu)`` with ``t1 + t2`` the angle
    between the two Bloch parts, and takes the root with the largest weight
    ``p = 4 a_i mu (sin t1 - mu) / (1 - mu^2)``.  ``p <= 0`` means nothing can
    be peeled from this pair; the returned step then has ``residual=None``.
    """
    if not 0.0 < mu < 1.0:
        raise InvalidParameter(f"mu must lie in (0, 1), got {mu}")
    i, j = pair
    if p.a[i] < p.a[j]:
        i, j = j, i
    ai, aj = float(p.a[i]), float(p.a[j])
    if aj <= ZERO_TOL:
        raise InvalidParameter("both elements of the pair must be nonzero")
    ui, uj = p.vecs[i] / ai, p.vecs[j] / aj
    theta12 = math.acos(min(1.0, max(-1.0, float(ui @ uj))))

    def g(t1):
        return ai * math.sin(t1) - aj * math.sin(theta12 - t1) - mu * (ai - aj)

    if abs(ai - aj) <= ZERO_TOL and abs(theta12 - math.pi) <= 1e-12:
        roots = [math.pi / 2]  # g vanishes identically; pi/2 maximises p
    elif abs(ai - aj) <= ZERO_TOL:
        roots = [theta12 / 2]
    else:
        roots = _roots(g, 0.0, theta12)
    if not roots:
        return PeelStep(0.0, np.zeros(3), (i, j), None, float("nan"), float("nan"), theta12)
    t1 = max(roots, key=math.sin)
    t2 = theta12 - t1
    weight = 4.0 * ai * mu * (math.sin(t1) - mu) / (1.0 - mu * mu)
    # frame: u_i = sin t1 e_x + cos t1 e_z,  u_j = -sin t2 e_x + cos t2 e_z
    f = uj - (ui @ uj) * ui
    nf = np.linalg.norm(f)
    f = f / nf if nf > 1e-9 else _orthonormal_to(ui)
    b = math.sin(t1) * ui - math.cos(t1) * f
    b /= np.linalg.norm(b)
    if weight <= 0.0:
        return PeelStep(weight, b, (i, j), None, t1, t2, theta12)
    scale = 1.0 / (1.0 - weight)
    a = p.a * scale
    vecs = p.vecs * scale
    a[i] = (ai - weight / 2) * scale
    a[j] = (aj - weight / 2) * scale
    vecs[i] = (mu * p.vecs[i] - (weight / 2) * b) * scale / mu
    vecs[j] = (mu * p.vecs[j] + (weight / 2) * b) * scale / mu
    return PeelStep(weight, b, (i, j), _reproject(a, vecs), t1, t2, theta12)


def _reproject(a: np.ndarray, vecs: np.ndarray) -> Povm:
    """Restore ``sum vec = 0``, ``a_i = |vec_i|`` and ``sum a = 1`` exactly-ish.

    Each peel divides by ``1 - p``, which would otherwise amplify rounding
    errors geometrically over many peels.
    """
    live = a > ZERO_TOL
    vecs = np.where(live[:, None], vecs, 0.0)
    vecs = vecs - live[:, None] * (vecs.sum(axis=0) / max(live.sum(), 1))
    norms = np.linalg.norm(vecs, axis=1)
    total = norms.sum()
    return Povm(norms / total, vecs / total)


@dataclass
class PovmItem:
    weight: float
    b: np.ndarray
    pair: tuple[int, int]


@dataclass
class PovmDecomposition:
    mu: float
    items: list = field(default_factory=list)
    residual_weight: float = 1.0
    residual: Povm | None = None
    complete: bool = False
    steps: int = 0

    def reconstruct(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Elements ``(a, mu vec_a)`` rebuilt from the items plus the weighted residual."""
        a = np.zeros(size)
        v = np.zeros((size, 3))
        for it in self.items:
            i, j = it.pair
            a[i] += it.weight / 2
            a[j] += it.weight / 2
            v[i] += it.weight / 2 * it.b
            v[j] -= it.weight / 2 * it.b
        if self.residual is not None and self.residual_weight > 0:
            ra, rv = self.residual.noisy(self.mu)
            a += self.residual_weight * ra
            v += self.residual_weight * rv
        return a, v

    def outcome_probabilities(self, r: np.ndarray, size: int) -> np.ndarray:
        """Outcome distribution on the state with Bloch vector ``r``, from the mixture."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(size)
        for it in self.items:
            i, j = it.pair
            pb = 0.5 * (1.0 + it.b @ r)
            out[i] += it.weight * pb
            out[j] += it.weight * (1.0 - pb)
        if self.residual is not None and self.residual_weight > 0:
            ra, rv = self.residual.noisy(self.mu)
            out += self.residual_weight * (ra + rv @ r)
        return out


def reconstruction_error(p: Povm, dec: PovmDecomposition) -> float:
    a, v = dec.reconstruct(len(p))
    ta, tv = p.noisy(dec.mu)
    return float(max(np.max(np.abs(a - ta)), np.max(np.abs(v - tv))))


def decompose(p: Povm, mu: float, tol_weight: float = 1e-6, max_steps: int = 10_000
              ) -> PovmDecomposition:
    """Peel projectors greedily (largest weight first) until the residual is negligible.

    A residual that is itself a two-outcome projective POVM ``{(1 +- b.sigma)/2}``
    is split exactly into its two noiseless projectors with weights
    ``(1 +- mu)/2``.  If the step budget runs out, ``complete`` is False.
    """
    if not validate_povm(p, 1e-10):
        raise InvalidParameter("input is not a valid extremal POVM")
    if not 0.0 < mu < 1.0:
        raise InvalidParameter(f"mu must lie in (0, 1), got {mu}")
    dec = PovmDecomposition(mu=mu, residual=p)
    cur, W = p, 1.0
    while dec.steps < max_steps:
        if cur.is_projective():
            i, j = cur.nonzero()
            b = cur.vecs[i] / np.linalg.norm(cur.vecs[i])
            dec.items.append(PovmItem(W * (1 + mu) / 2, b, (i, j)))
            dec.items.append(PovmItem(W * (1 - mu) / 2, -b, (i, j)))
            W, cur = 0.0, None
            break
        best = None
        for pair in itertools.combinations(cur.nonzero(), 2):
            st = peel(cur, mu, pair)
            if st.peeled and (best is None or st.p > best.p):
                best = st
        if best is None:
            break
        dec.items.append(PovmItem(W * best.p, best.b, best.pair))
        W *= 1.0 - best.p
        cur = best.residual
        dec.steps += 1
        if W <= tol_weight:
            break
    dec.residual_weight, dec.residual = W, cur
    dec.complete = W <= tol_weight
    return dec


def povm_visibility_bound(v1: Interval) -> Interval:
    """``(2/3) v1``: visibility reached for general POVMs at noise ``sqrt(2/3)``."""
    return v1 * Fraction(2, 3)


def random_extremal_povm(seed: int, outcomes: int = 4, max_tries: int = 100) -> Povm:
    if outcomes not in (3, 4):
        raise InvalidParameter("outcomes must be 3 or 4")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        v = rng.normal(size=(outcomes, 3))
        v -= v.mean(axis=0)
        norms = np.linalg.norm(v, axis=1)
        total = norms.sum()
        if np.min(norms) / total < 1e-9:
            continue
        v /= total
        return Povm(np.linalg.norm(v, axis=1), v)
    raise InternalInconsistency("could not draw a nondegenerate POVM")


def tetrahedron_povm() -> Povm:
    t = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3)
    return Povm(np.full(4, 0.25), t / 4)


def trine_povm() -> Povm:
    ang = 2 * math.pi * np.arange(3) / 3
    v = np.stack([np.cos(ang), np.sin(ang), np.zeros(3)], axis=1) / 3
    return Povm(np.full(3, 1 / 3), v)


# --- file formats ---------------------------------------------------------

def read_povm(path) -> tuple[Povm, float | None]:
    try:
        doc = json.loads(Path(path).read_text())
        rows = [[float(c) for c in el] for el in doc["elements"]]
        if any(len(r) != 4 for r in rows):
            raise ValueError("each element needs (a, ax, ay, az)")
        mu = float(doc["mu"]) if doc.get("mu") is not None else None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InvalidParameter(f"cannot parse POVM file {path}: {exc}") from exc
    arr = np.array(rows)
    return Povm(arr[:, 0], arr[:, 1:]), mu


def write_povm(p: Povm, path, mu: float | None = None) -> None:
    doc = {"mu": None if mu is None else repr(mu),
           "elements": [[repr(float(p.a[i]))] + [repr(float(c)) for c in p.vecs[i]]
                        for i in range(len(p))]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_decomposition(dec: PovmDecomposition, path) -> None:
    res = dec.residual
    doc = {
        "mu": repr(dec.mu),
        "complete": dec.complete,
        "residual_weight": repr(dec.residual_weight),
        "items": [[repr(it.weight)] + [repr(float(c)) for c in it.b] + list(it.pair)
                  for it in dec.items],
        "residual": None if res is None else
        [[repr(float(res.a[i]))] + [repr(float(c)) for c in res.vecs[i]] for i in range(len(res))],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
