import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from werner_lhv import gilbert
from werner_lhv.bloch import build_polyhedron, werner_target
from werner_lhv.errors import CheckpointError, DecompositionFileError, InvalidParameter


@pytest.fixture
def target():
    return werner_target(build_polyhedron(3), 0.5)


def test_init_is_origin(target):
    st_ = gilbert.init(target)
    assert np.array_equal(st_.current, np.zeros((9, 9)))
    assert np.array_equal(st_.recompute_current(), st_.current)
    assert st_.size == 2 and np.allclose(st_.weights, 0.5)
    assert st_.distance == pytest.approx(np.linalg.norm(target))


def test_init_rejects_bad_target():
    with pytest.raises(InvalidParameter):
        gilbert.init(np.full((2, 2), 1.5))
    with pytest.raises(InvalidParameter):
        gilbert.init(np.zeros((2, 3)))


def test_line_search_matches_dense_scan(target):
    state = gilbert.init(target)
    for _ in range(5):
        gilbert.step(state, gilbert.Oracle("heuristic", 10))
    before = state.copy()
    G = state.target - state.current
    a, b = gilbert.Oracle("heuristic", 10)(G, 123)
    d = np.outer(a, b) - state.current
    ts = np.linspace(0, 1, 100_001)
    dists = [np.linalg.norm(G - t * d) for t in ts]
    t_star = min(max(float(np.sum(G * d) / np.sum(d * d)), 0.0), 1.0)
    assert np.linalg.norm(G - t_star * d) <= min(dists) + 1e-12
    assert before.distance == state.distance


@given(st.integers(2, 6), st.floats(0.05, 0.6), st.integers(0, 10**6))
@settings(max_examples=25)
def test_invariants_along_run(n, v, seed):
    state = gilbert.init(werner_target(build_polyhedron(n), v), seed)
    trace = []
    gilbert.run(state, gilbert.Oracle("heuristic", 5), 0.0, 150, trace=trace)
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert np.all(state.weights >= 0)
    assert abs(state.weights.sum() - 1.0) <= 1e-12
    assert np.max(np.abs(state.recompute_current() - state.current)) <= 1e-9


def test_eps_above_start_returns_immediately(target):
    state = gilbert.init(target)
    gilbert.run(state, gilbert.Oracle(), eps=10.0, max_iters=100)
    assert state.iteration == 0


def test_reaches_eps(target):
    state = gilbert.init(target)
    gilbert.run(state, gilbert.Oracle("heuristic", 20), 1e-3, 10**5)
    assert state.distance <= 1e-3


def test_duplicate_vertices_merge(target):
    state = gilbert.init(target)
    ones = np.ones(9, np.int8)
    state._add(-ones, -ones, 0.0)  # same as (+1, +1) after the global flip
    assert state.size == 2


def test_checkpoint_round_trip_and_resume(tmp_path, target):
    oracle = gilbert.Oracle("heuristic", 10)
    full = gilbert.init(target, 5)
    gilbert.run(full, oracle, 0.0, 400)
    part = gilbert.init(target, 5)
    gilbert.run(part, oracle, 0.0, 150, path=tmp_path / "ck")
    back = gilbert.resume(tmp_path / "ck")
    assert back.iteration == part.iteration and back.distance == part.distance
    assert np.array_equal(back.current, part.current)
    gilbert.run(back, oracle, 0.0, 250)
    assert np.array_equal(back.current, full.current)
    assert np.array_equal(back.weights, full.weights)


def test_checkpoint_truncated(tmp_path, target):
    state = gilbert.init(target)
    gilbert.run(state, gilbert.Oracle("heuristic", 5), 0.0, 20)
    gilbert.save_checkpoint(state, tmp_path / "ck")
    data = (tmp_path / "ck").read_bytes()
    (tmp_path / "cut").write_bytes(data[:-10])
    with pytest.raises(CheckpointError, match="checksum"):
        gilbert.resume(tmp_path / "cut")


def test_checkpoint_version_mismatch(tmp_path, target):
    data = bytearray(gilbert.encode_checkpoint(gilbert.init(target)))
    data[8:12] = struct.pack("<I", 99)
    with pytest.raises(CheckpointError, match="version"):
        gilbert.decode_checkpoint(bytes(data))


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        gilbert.decode_checkpoint(b"x" * 100)


def test_decomposition_file(tmp_path, target):
    state = gilbert.init(target)
    gilbert.run(state, gilbert.Oracle("heuristic", 5), 0.0, 50)
    gilbert.write_decomposition(state, tmp_path / "d.json")
    dec, header = gilbert.read_decomposition(tmp_path / "d.json")
    assert np.array_equal(dec.weights, state.weights)
    assert np.allclose(dec.point(), state.current, atol=1e-12)
    assert header["distance"] == state.distance
    text = (tmp_path / "d.json").read_text().replace('"weight": 0.', '"weight": 1.', 1)
    (tmp_path / "t.json").write_text(text)
    with pytest.raises(DecompositionFileError, match="checksum"):
        gilbert.read_decomposition(tmp_path / "t.json")
