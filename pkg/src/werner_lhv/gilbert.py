"""Gilbert-type iteration towards a target point of the local correlation polytope.

Each step asks an oracle for the vertex ``l`` maximising ``<q - q_i, l>`` and
moves ``q_i`` to the point of the segment ``[q_i, l]`` closest to ``q``.  The
state keeps the explicit convex decomposition of ``q_i`` so that the result
can be certified later.
"""
from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DecompositionFileError, InvalidParameter
from .polytope import (DEFAULT_RESTARTS, ConvexDecomposition, DeterministicStrategy,
                       exact_oracle, heuristic_signs)

log = logging.getLogger(__name__)

MAGIC = b"GLBCKPT1"
VERSION = 1
DEFAULT_CHECKPOINT_EVERY = 100_000
RENORMALIZE_EVERY = 10_000


class Oracle:
    """Overlap oracle ``(G, seed) -> (a, b)`` with its configuration."""

    def __init__(self, kind: str = "heuristic", restarts: int = DEFAULT_RESTARTS):
        if kind not in ("heuristic", "exact"):
            raise InvalidParameter(f"unknown oracle kind {kind!r}")
        self.kind = kind
        self.restarts = restarts

    @property
    def deterministic(self) -> bool:
        return self.kind == "exact"

    def __call__(self, G: np.ndarray, seed: int):
        """Return the sign vectors ``(a, b)`` of the chosen vertex."""
        if self.kind == "exact":
            s, _ = exact_oracle(G)
            return s.a, s.b
        return heuristic_signs(G, self.restarts, seed)

    def config(self) -> dict:
        return {"kind": self.kind, "restarts": self.restarts}


@dataclass
class GilbertState:
    iteration: int
    target: np.ndarray
    current: np.ndarray
    A: np.ndarray                 # (capacity, m) int8, Alice signs per decomposition entry
    B: np.ndarray                 # (capacity, m) int8
    w: np.ndarray                 # (capacity,) weights; only the first ``size`` are live
    size: int
    index: dict                   # strategy key -> row
    distance: float
    rng: np.random.Generator
    meta: dict = field(default_factory=dict)
    stalled: bool = False
    last_step: float = 0.0

    @property
    def m(self) -> int:
        return self.target.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.w[: self.size]

    @property
    def decomposition(self) -> ConvexDecomposition:
        strategies = [DeterministicStrategy(self.A[i], self.B[i]) for i in range(self.size)]
        return ConvexDecomposition(strategies, self.weights.copy(), self.m)

    def recompute_current(self) -> np.ndarray:
        A = self.A[: self.size].astype(float)
        B = self.B[: self.size].astype(float)
        return (A * self.weights[:, None]).T @ B

    def copy(self) -> "GilbertState":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return GilbertState(
            self.iteration, self.target.copy(), self.current.copy(), self.A[: self.size].copy(),
            self.B[: self.size].copy(), self.w[: self.size].copy(), self.size, dict(self.index),
            self.distance, rng, json.loads(json.dumps(self.meta)), self.stalled, self.last_step)

    def _add(self, a: np.ndarray, b: np.ndarray, weight: float) -> int:
        if a[0] < 0:
            a, b = -a, -b
        key = np.packbits(a > 0).tobytes() + np.packbits(b > 0).tobytes()
        row = self.index.get(key)
        if row is not None:
            self.w[row] += weight
            return row
        if self.size == len(self.w):
            cap = max(16, 2 * len(self.w))
            self.A = np.resize(self.A, (cap, self.m))
            self.B = np.resize(self.B, (cap, self.m))
            w = np.zeros(cap)
            w[: self.size] = self.w[: self.size]
            self.w = w
        row = self.size
        self.A[row], self.B[row], self.w[row] = a, b, weight
        self.index[key] = row
        self.size += 1
        return row


def init(target: np.ndarray, seed: int = 0) -> GilbertState:
    """Start at the origin, held as equal weights on ``(+1, +1)`` and ``(-1, +1)``."""
    target = np.array(target, dtype=float)
    if target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise InvalidParameter("target must be a square matrix")
    if np.any(np.abs(target) > 1.0):
        raise InvalidParameter("target entries must lie in [-1, 1]")
    m = target.shape[0]
    state = GilbertState(
        iteration=0, target=target, current=np.zeros((m, m)),
        A=np.zeros((0, m), np.int8), B=np.zeros((0, m), np.int8), w=np.zeros(0),
        size=0, index={}, distance=float(np.linalg.norm(target)),
        rng=np.random.default_rng(seed), meta={"seed": seed, "norm": "euclidean"})
    ones = np.ones(m, np.int8)
    state._add(ones, ones, 0.5)
    state._add(-ones, ones, 0.5)
    return state


def step(state: GilbertState, oracle) -> GilbertState:
    """One iteration, in place.  Sets ``state.stalled`` when no move shortens the distance."""
    G = state.target - state.current
    seed = int(state.rng.integers(0, 2**63 - 1))
    a, b = oracle(G, seed)
    a = np.asarray(a, dtype=np.int8)
    b = np.asarray(b, dtype=np.int8)
    d = np.outer(a, b).astype(float) - state.current
    dd = float(np.einsum("ij,ij->", d, d))
    gd = float(np.einsum("ij,ij->", G, d))
    state.stalled, state.last_step = True, 0.0
    if dd == 0.0 or gd <= 0.0:
        return state
    t = min(gd / dd, 1.0)
    new = state.current + t * d
    dist = float(np.linalg.norm(state.target - new))
    if dist >= state.distance:
        return state
    state.w[: state.size] *= 1.0 - t
    state._add(a, b, t)
    state.current = new
    state.distance = dist
    state.iteration += 1
    state.stalled, state.last_step = False, t
    if state.iteration % RENORMALIZE_EVERY == 0:
        total = state.weights.sum()
        if abs(total - 1.0) > 1e-15:
            log.debug("renormalising weights at iteration %d (sum-1 = %.3e)",
                      state.iteration, total - 1.0)
            state.w[: state.size] /= total
    return state


def run(state: GilbertState, oracle, eps: float, max_iters: int,
        checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY, path=None,
        log_every: int = 0, trace: list | None = None) -> GilbertState:
    """Iterate until ``distance <= eps`` or ``max_iters`` calls have been made.

    ``max_iters`` counts oracle calls from this invocation, accepted or not.
    ``trace``, if given, receives the distance after every call.
    """
    if eps < 0:
        raise InvalidParameter("eps must be nonnegative")
    state.meta.setdefault("oracle", getattr(oracle, "config", lambda: {})())
    calls = 0
    while state.distance > eps and calls < max_iters:
        before = state.distance
        step(state, oracle)
        calls += 1
        if state.distance > before:
            raise AssertionError("distance increased")
        if trace is not None:
            trace.append(state.distance)
        if state.stalled and getattr(oracle, "deterministic", False):
            log.info("exact oracle found no improving vertex at distance %.6e", state.distance)
            break
        if path is not None and checkpoint_every and calls % checkpoint_every == 0:
            save_checkpoint(state, path)
        if log_every and calls % log_every == 0:
            log.info("iter %d  distance %.6e  size %d", state.iteration, state.distance, state.size)
    if path is not None:
        save_checkpoint(state, path)
    return state


# --- checkpoints ----------------------------------------------------------

def _target_hash(target: np.ndarray) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(target, dtype="<f8").tobytes()).digest()


def _blob(data: bytes) -> bytes:
    return struct.pack("<Q", len(data)) + data


def encode_checkpoint(state: GilbertState) -> bytes:
    m = state.m
    parts = [MAGIC, struct.pack("<IIQ", VERSION, m, state.iteration)]
    parts.append(_blob(json.dumps(state.rng.bit_generator.state).encode()))
    parts.append(_target_hash(state.target))
    parts.append(np.ascontiguousarray(state.target, dtype="<f8").tobytes())
    parts.append(struct.pack("<Q", state.size))
    for i in range(state.size):
        parts.append(np.packbits(state.A[i] > 0).tobytes())
        parts.append(np.packbits(state.B[i] > 0).tobytes())
        parts.append(struct.pack("<d", state.w[i]))
    parts.append(np.ascontiguousarray(state.current, dtype="<f8").tobytes())
    parts.append(struct.pack("<d", state.distance))
    parts.append(_blob(json.dumps(state.meta, sort_keys=True).encode()))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        out = self.data[self.pos: self.pos + n]
        self.pos += n
        return out


def decode_checkpoint(data: bytes) -> GilbertState:
    if len(data) < len(MAGIC) + 32 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic: not a Gilbert checkpoint")
    body, digest = data[:-32], data[-32:]
    r = _Reader(body)
    r.take(len(MAGIC), "magic")
    version, m, iteration = struct.unpack("<IIQ", r.take(16, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint corrupt or truncated")
    (n_rng,) = struct.unpack("<Q", r.take(8, "rng_state length"))
    rng_state = json.loads(r.take(n_rng, "rng_state"))
    thash = r.take(32, "target hash")
    target = np.frombuffer(r.take(8 * m * m, "target"), dtype="<f8").reshape(m, m).copy()
    if _target_hash(target) != thash:
        raise CheckpointError("target hash mismatch")
    (size,) = struct.unpack("<Q", r.take(8, "decomposition count"))
    nbytes = (m + 7) // 8
    A = np.zeros((size, m), np.int8)
    B = np.zeros((size, m), np.int8)
    w = np.zeros(size)
    for i in range(size):
        for M in (A, B):
            bits = np.unpackbits(np.frombuffer(r.take(nbytes, "strategy bits"), np.uint8))[:m]
            M[i] = np.where(bits == 1, 1, -1)
        (w[i],) = struct.unpack("<d", r.take(8, "weight"))
    current = np.frombuffer(r.take(8 * m * m, "current"), dtype="<f8").reshape(m, m).copy()
    (distance,) = struct.unpack("<d", r.take(8, "distance"))
    (n_meta,) = struct.unpack("<Q", r.take(8, "meta length"))
    meta = json.loads(r.take(n_meta, "meta"))
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after meta")
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    index = {np.packbits(A[i] > 0).tobytes() + np.packbits(B[i] > 0).tobytes(): i
             for i in range(size)}
    return GilbertState(iteration, target, current, A, B, w, size, index, distance, rng, meta)


@contextmanager
def _locked(path: Path):
    with open(str(path) + ".lock", "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def save_checkpoint(state: GilbertState, path) -> None:
    """Atomically replace ``path``; the previous checkpoint survives any failure."""
    path = Path(path)
    drift = float(np.max(np.abs(state.recompute_current() - state.current)))
    if drift > 1e-9:
        raise AssertionError(f"current drifted {drift:.3e} from its decomposition")
    data = encode_checkpoint(state)
    tmp = path.with_name(path.name + ".tmp")
    with _locked(path):
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)


def resume(path) -> GilbertState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)


# --- decomposition files --------------------------------------------------

DECOMPOSITION_FORMAT = "werner-lhv-decomposition/1"


def _digest(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "sha256"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def write_decomposition(state: GilbertState, path) -> None:
    """JSON file with hex strategies and round-trip float weights, plus a checksum."""
    records = []
    for i in range(state.size):
        a_hex, b_hex = DeterministicStrategy(state.A[i], state.B[i]).to_hex()
        records.append({"a": a_hex, "b": b_hex, "weight": float(state.w[i])})
    doc = {
        "format": DECOMPOSITION_FORMAT,
        "m": state.m,
        "iteration": state.iteration,
        "distance": state.distance,
        "meta": state.meta,
        "strategies": records,
    }
    doc["sha256"] = _digest(doc)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_decomposition(path) -> tuple[ConvexDecomposition, dict]:
    """Inverse of :func:`write_decomposition`; returns the decomposition and the header."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DecompositionFileError(f"cannot parse decomposition {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != DECOMPOSITION_FORMAT:
        raise DecompositionFileError("not a decomposition file")
    if doc.get("sha256") != _digest(doc):
        raise DecompositionFileError("checksum mismatch")
    m = int(doc["m"])
    strategies, weights = [], []
    for i, rec in enumerate(doc["strategies"]):
        try:
            strategies.append(DeterministicStrategy.from_hex(rec["a"], rec["b"], m))
            weights.append(float(rec["weight"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecompositionFileError(f"strategy record {i}: {exc}") from exc
    header = {k: v for k, v in doc.items() if k != "strategies"}
    return ConvexDecomposition(strategies, np.array(weights), m), header
