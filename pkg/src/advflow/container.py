"""Binary container for named float32 tensors.

Layout (all integers little-endian uint32):

    8 bytes   magic ``ADVFLOW1``
    u32       descriptor length, then that many bytes of UTF-8 JSON
    u32       tensor count
    per tensor:
        u32       name length, then that many bytes of UTF-8 name
        u32       rank, then rank u32 dimensions
        data      little-endian float32, C order

The JSON descriptor carries whatever structured metadata the producer
needs (model architecture, dump provenance); tensors are always stored
as float32 regardless of the in-memory dtype.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError

MAGIC = b"ADVFLOW1"

_U32 = struct.Struct("<I")


def write_container(path, descriptor: dict, tensors: dict[str, np.ndarray]) -> None:
    """Serialize ``tensors`` with ``descriptor`` to ``path``."""
    blob = bytearray()
    blob += MAGIC
    desc = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += _U32.pack(len(desc)) + desc
    blob += _U32.pack(len(tensors))
    for name, arr in tensors.items():
        enc = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        blob += _U32.pack(len(enc)) + enc
        blob += _U32.pack(arr.ndim)
        for dim in arr.shape:
            blob += _U32.pack(dim)
        blob += arr.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    """Cursor over a byte buffer that reports the offset of any failure."""

    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated container, needed {n} bytes at byte {self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a container, returning (descriptor, tensors).

    Raises FormatError with the byte offset on bad magic or truncation.
    """
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    desc_len = r.u32()
    try:
        descriptor = json.loads(r.take(desc_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad descriptor at byte 12: {e}") from e
    tensors: dict[str, np.ndarray] = {}
    count = r.u32()
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        if rank > 8:
            raise FormatError(f"{path}: implausible rank {rank} at byte {r.pos - 4}")
        shape = tuple(r.u32() for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = r.take(4 * size)
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes at byte {r.pos}")
    return descriptor, tensors
