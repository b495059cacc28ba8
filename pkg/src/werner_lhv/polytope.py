"""Local correlation polytope: deterministic vertices, overlap oracles, L1 test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InternalInconsistency, SizeLimitError

DEFAULT_RESTARTS = 100
EXACT_MAX_M = 22


def _signs(bits: np.ndarray) -> np.ndarray:
    return np.where(bits, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class DeterministicStrategy:
    """Outputs ``a_x`` for Alice and ``b_y`` for Bob, each in {-1, +1}."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.int8)
        b = np.asarray(self.b, dtype=np.int8)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a and b must be 1-d sign vectors of equal length")
        if not (np.all(np.abs(a) == 1) and np.all(np.abs(b) == 1)):
            raise ValueError("strategy entries must be +1 or -1")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return len(self.a)

    @property
    def key(self) -> bytes:
        return np.packbits(self.a > 0).tobytes() + np.packbits(self.b > 0).tobytes()

    def __eq__(self, other):
        return isinstance(other, DeterministicStrategy) and self.m == other.m and self.key == other.key

    def __hash__(self):
        return hash((self.m, self.key))

    def canonical(self) -> "DeterministicStrategy":
        """The representative of ``{(a, b), (-a, -b)}`` with ``a[0] = +1``."""
        if self.a[0] > 0:
            return self
        return DeterministicStrategy(-self.a, -self.b)

    def to_hex(self) -> tuple[str, str]:
        return np.packbits(self.a > 0).tobytes().hex(), np.packbits(self.b > 0).tobytes().hex()

    @classmethod
    def from_hex(cls, a_hex: str, b_hex: str, m: int) -> "DeterministicStrategy":
        """Inverse of :meth:`to_hex`; rejects wrong lengths and nonzero padding bits."""
        nbytes = (m + 7) // 8
        out = []
        for h in (a_hex, b_hex):
            raw = bytes.fromhex(h)
            if len(raw) != nbytes:
                raise ValueError(f"expected {nbytes} bytes for m={m}, got {len(raw)}")
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
            if np.any(bits[m:]):
                raise ValueError("nonzero padding bits")
            out.append(_signs(bits[:m].astype(bool)))
        return cls(out[0], out[1])


@dataclass
class ConvexDecomposition:
    strategies: list
    weights: np.ndarray
    m: int

    def point(self) -> np.ndarray:
        if not self.strategies:
            return np.zeros((self.m, self.m))
        A = np.array([s.a for s in self.strategies], dtype=float)
        B = np.array([s.b for s in self.strategies], dtype=float)
        return (A * np.asarray(self.weights)[:, None]).T @ B


def vertex_matrix(s: DeterministicStrategy) -> np.ndarray:
    return np.outer(s.a, s.b).astype(float)


def overlap(G: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``sum_{x,y} G[x,y] a_x b_y``, correctly rounded (products are exact)."""
    return math.fsum((G * np.outer(a, b)).ravel())


def _sign_vector(v: np.ndarray) -> np.ndarray:
    # zero maps to -1, matching a strict "> 0" test
    return np.where(v > 0, 1.0, -1.0)


def _alternate(G: np.ndarray, A: np.ndarray, max_rounds: int = 10_000):
    """Run alternating maximisation from every row of ``A`` at once.

    Each row is an independent restart; rows stop as soon as their ``a``
    assignment repeats.  Returns the final (A, B) and per-row overlaps.
    """
    R = A.shape[0]
    A = A.astype(float)
    B = _sign_vector(A @ G)
    S = np.einsum("ry,ry->r", A @ G, B)
    active = np.ones(R, dtype=bool)
    scale = np.abs(G).sum() * 1e-12 + 1e-300
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        GB = B[idx] @ G.T
        A_new = _sign_vector(GB)
        S_a = np.einsum("rx,rx->r", A_new, GB)
        if np.any(S_a < S[idx] - scale):
            raise InternalInconsistency("overlap decreased during the a-update")
        B_new = _sign_vector(A_new @ G)
        S_b = np.einsum("ry,ry->r", A_new @ G, B_new)
        if np.any(S_b < S_a - scale):
            raise InternalInconsistency("overlap decreased during the b-update")
        done = np.all(A_new == A[idx], axis=1)
        A[idx] = A_new
        B[idx] = B_new
        S[idx] = S_b
        active[idx[done]] = False
    else:
        raise InternalInconsistency("alternating maximisation did not settle")
    return A, B, S


@numba.njit(cache=True)
def _alternate_inplace(G, A, C, B, Rw, tol):  # pragma: no cover - compiled
    """Incremental alternating maximisation; ``C = A @ G``, ``Rw = B @ G.T`` on entry.

    Only flipped signs touch the running row/column sums.
    """
    R, m = A.shape
    S = np.empty(R)
    for r in range(R):
        a = A[r]
        col = C[r]
        b = B[r]
        row = Rw[r]
        s_prev = 0.0
        for y in range(m):
            s_prev += b[y] * col[y]
        while True:
            changed = False
            for x in range(m):
                na = 1.0 if row[x] > 0 else -1.0
                if na != a[x]:
                    changed = True
                    d = na - a[x]
                    a[x] = na
                    for y in range(m):
                        col[y] += d * G[x, y]
            s_a = 0.0
            for x in range(m):
                s_a += a[x] * row[x]
            if s_a < s_prev - tol:
                raise AssertionError("overlap decreased during the a-update")
            if not changed:
                s_prev = s_a
                break
            for y in range(m):
                nb = 1.0 if col[y] > 0 else -1.0
                if nb != b[y]:
                    d = nb - b[y]
                    b[y] = nb
                    for x in range(m):
                        row[x] += d * G[x, y]
            s_b = 0.0
            for y in range(m):
                s_b += b[y] * col[y]
            if s_b < s_a - tol:
                raise AssertionError("overlap decreased during the b-update")
            s_prev = s_b
        S[r] = s_prev
    return S


def heuristic_signs(G: np.ndarray, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                    reference: bool = False):
    """Sign vectors ``(a, b)`` of the best restart, without the exact overlap.

    ``reference=True`` uses the plain numpy iteration instead of the compiled
    incremental kernel.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    G = np.ascontiguousarray(G, dtype=float)
    rng = np.random.default_rng(seed)
    A0 = rng.choice(np.array([-1.0, 1.0]), size=(restarts, G.shape[0]))
    if reference:
        A, B, S = _alternate(G, A0)
    else:
        A = A0
        C = A @ G
        B = _sign_vector(C)
        Rw = B @ G.T
        S = _alternate_inplace(G, A, C, B, Rw, np.abs(G).sum() * 1e-12 + 1e-300)
    best = int(np.argmax(S))
    return A[best], B[best]


def heuristic_oracle(G: np.ndarray, restarts: int = DEFAULT_RESTARTS, seed: int = 0):
    """Best strategy over ``restarts`` alternating-maximisation runs.

    Restart ``r`` starts from row ``r`` of a ``(restarts, m)`` uniform sign
    draw from ``default_rng(seed)``, so the result does not depend on how the
    restarts are scheduled.  Ties go to the lowest restart index.

    Returns
    -------
    strategy : DeterministicStrategy
    S : float
        ``<G, D_strategy>``, correctly rounded.
    """
    a, b = heuristic_signs(G, restarts, seed)
    s = DeterministicStrategy(a, b)
    return s, overlap(np.asarray(G, dtype=float), s.a, s.b)


def _signs_from_code(code: int, m: int) -> np.ndarray:
    bits = (code >> np.arange(m - 1, dtype=np.int64)) & 1
    return np.concatenate([[1.0], np.where(bits == 1, -1.0, 1.0)])


def exact_oracle(G: np.ndarray, chunk: int = 1 << 15, max_ties: int = 4096):
    """Exact overlap maximum by enumerating Alice's signs (``a_1 = +1``).

    Float sums can tie vertices whose exact overlaps differ in the last bits,
    so every code within a rounding bound of the float maximum is rescored with
    correctly rounded sums (at most ``max_ties`` of them).
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    if m > EXACT_MAX_M:
        raise SizeLimitError(f"exact oracle supports m <= {EXACT_MAX_M}, got {m}")
    total = 1 << (m - 1)
    shifts = np.arange(m - 1, dtype=np.int64)
    tol = 4.0 * m * m * np.finfo(float).eps * float(np.abs(G).sum())
    best_val = -np.inf
    cand_codes, cand_vals = np.zeros(0, np.int64), np.zeros(0)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = (codes[:, None] >> shifts) & 1
        A = np.hstack([np.ones((len(codes), 1)), np.where(bits == 1, -1.0, 1.0)])
        vals = np.abs(A @ G).sum(axis=1)
        best_val = max(best_val, float(vals.max()))
        keep = vals >= best_val - tol
        cand_codes = np.concatenate([cand_codes, codes[keep]])
        cand_vals = np.concatenate([cand_vals, vals[keep]])
        live = cand_vals >= best_val - tol
        cand_codes, cand_vals = cand_codes[live], cand_vals[live]
        if len(cand_codes) > max_ties:
            top = np.argsort(-cand_vals, kind="stable")[:max_ties]
            cand_codes, cand_vals = cand_codes[np.sort(top)], cand_vals[np.sort(top)]
    best = None
    for code in cand_codes:
        a = _signs_from_code(int(code), m)
        col = np.array([math.fsum(a * G[:, y]) for y in range(m)])
        b = _sign_vector(col)
        S = overlap(G, a, b)
        if best is None or S > best[0]:
            best = (S, a, b)
    S, a, b = best
    return DeterministicStrategy(a, b), S


@dataclass
class L1Check:
    """Outcome of the L1 locality test.

    When certified, ``z = sum_ij |z_ij| sign(z_ij) E_ij + e0_weight * E_0``
    with ``E_ij`` the unit matrix at ``(i, j)`` and ``E_0 = 0``.
    """

    is_certified_local: bool
    l1: float
    e_weights: np.ndarray
    e_signs: np.ndarray
    e0_weight: float

    def weight_sum(self) -> float:
        return math.fsum(self.e_weights.ravel()) + self.e0_weight

    def reconstruct(self) -> np.ndarray:
        return self.e_weights * self.e_signs


def l1_local_check(z: np.ndarray) -> L1Check:
    z = np.asarray(z, dtype=float)
    l1 = math.fsum(np.abs(z).ravel())
    return L1Check(
        is_certified_local=l1 < 1.0,
        l1=l1,
        e_weights=np.abs(z),
        e_signs=np.sign(z),
        e0_weight=1.0 - l1,
    )
