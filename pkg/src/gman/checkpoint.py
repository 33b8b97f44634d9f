"""Flat binary checkpoints.

Layout (all integers little-endian)::

    b"GMANCKPT"  u32 version
    repeated until EOF:
        u64 name length, name bytes (utf-8)
        u64 rank, rank x u64 dims
        prod(dims) x f64 payload, row-major
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GMANCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")  # tobytes() below is C order; keeps 0-d shapes
        raw = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<Q", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:8] != MAGIC:
        raise CheckpointError("bad magic: not a GMANCKPT file")
    if len(buf) < 12:
        raise CheckpointError("truncated header")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> int:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        start = pos
        pos += n
        return start

    while pos < len(buf):
        (n,) = struct.unpack_from("<Q", buf, take(8))
        name = buf[take(n):pos].decode("utf-8")
        (rank,) = struct.unpack_from("<Q", buf, take(8))
        dims = struct.unpack_from(f"<{rank}Q", buf, take(8 * rank))
        count = int(np.prod(dims)) if rank else 1
        start = take(8 * count)
        out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=start).reshape(dims).copy()
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    """Write atomically via a temp file and rename."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(tensors))
    os.replace(tmp, path)


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
