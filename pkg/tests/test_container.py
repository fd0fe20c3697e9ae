import numpy as np
import pytest

from advflow.container import MAGIC, read_container, write_container
from advflow.exceptions import FormatError


def roundtrip(tmp_path, descriptor, tensors):
    path = tmp_path / "t.bin"
    write_container(path, descriptor, tensors)
    return read_container(path)


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "w": rng.normal(size=(3, 4)).astype(np.float32),
        "b": rng.normal(size=(4,)).astype(np.float32),
        "deep": rng.normal(size=(2, 3, 2, 2)).astype(np.float32),
    }
    desc, loaded = roundtrip(tmp_path, {"kind": "test", "n": 7}, tensors)
    assert desc == {"kind": "test", "n": 7}
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert np.array_equal(loaded[k], tensors[k])
        assert loaded[k].dtype == np.float32


def test_write_is_deterministic(tmp_path):
    t = {"a": np.ones((2, 2), np.float32)}
    write_container(tmp_path / "x.bin", {"z": 1, "a": 2}, t)
    write_container(tmp_path / "y.bin", {"a": 2, "z": 1}, t)
    assert (tmp_path / "x.bin").read_bytes() == (tmp_path / "y.bin").read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "t.bin"
    write_container(path, {}, {"a": np.zeros(1, np.float32)})
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_container(path)


def test_truncation_everywhere(tmp_path):
    path = tmp_path / "t.bin"
    write_container(path, {"k": "v"}, {"a": np.arange(6, dtype=np.float32).reshape(2, 3)})
    raw = path.read_bytes()
    # every strict prefix must fail loudly, never return garbage
    for cut in range(len(raw)):
        path.write_bytes(raw[:cut])
        with pytest.raises(FormatError):
            read_container(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_container(path, {}, {"a": np.zeros(2, np.float32)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_container(path)


def test_magic_value():
    assert MAGIC == b"ADVFLOW1"
    assert len(MAGIC) == 8
