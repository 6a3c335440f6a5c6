"""Checkpoint round-trip and format validation."""

import numpy as np
import pytest

from silmesh.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from silmesh.errors import CheckpointFormatError


@pytest.fixture
def sample(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "b.w": rng.standard_normal((3, 4)).astype(np.float32),
        "a.v": rng.standard_normal(7).astype(np.float32),
        "scalar_like": np.float32(2.5).reshape(()),
    }
    scalars = {"K": 24, "iteration": 100, "note": "x"}
    path = tmp_path / "model.p3df"
    save_checkpoint(str(path), arrays, scalars)
    return path, arrays, scalars


def test_round_trip_exact(sample):
    path, arrays, scalars = sample
    got_arrays, got_scalars = load_checkpoint(str(path))
    assert set(got_arrays) == set(arrays)
    for name in arrays:
        assert got_arrays[name].dtype == np.float32
        assert np.array_equal(got_arrays[name], arrays[name])
    assert got_scalars == scalars


def test_deterministic_bytes(sample, tmp_path):
    path, arrays, scalars = sample
    other = tmp_path / "again.p3df"
    save_checkpoint(str(other), dict(reversed(list(arrays.items()))), scalars)
    assert path.read_bytes() == other.read_bytes()


def test_magic_and_version(sample):
    path, _, _ = sample
    assert path.read_bytes()[:4] == MAGIC


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.p3df"
    p.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(str(p))


def test_bad_version_rejected(sample):
    path, _, _ = sample
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(str(path))


def test_truncation_rejected(sample):
    path, _, _ = sample
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(str(path))


def test_trailing_garbage_rejected(sample):
    path, _, _ = sample
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(str(path))
