"""Flat binary store for precomputed text embeddings.

Layout: magic "RSAE", u32 version, u32 dim, u32 count, then
count * dim little-endian float32 values in row order. Purpose-built so
the on-disk bytes are a deterministic function of the matrix.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError

MAGIC = b"RSAE"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_embedding_store(path, matrix: np.ndarray) -> None:
    """Write a (count, dim) float array as an embedding store."""
    arr = np.asarray(matrix, dtype=np.float32)
    if arr.ndim != 2:
        raise ConfigError(f"embedding matrix must be 2-D, got {arr.shape}")
    count, dim = arr.shape
    if dim < 1:
        raise ConfigError("embedding dim must be >= 1")
    header = _HEADER.pack(MAGIC, VERSION, dim, count)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def read_embedding_store(path) -> np.ndarray:
    """Read an embedding store into a (count, dim) float32 matrix."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(
            f"{path}: file of {len(data)} bytes is shorter than the "
            f"{_HEADER.size}-byte header"
        )
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(
            f"{path}: unsupported store version {version}, expected {VERSION}"
        )
    expected = _HEADER.size + 4 * dim * count
    if len(data) != expected:
        raise DataError(
            f"{path}: header promises {count}x{dim} values "
            f"({expected} bytes), file has {len(data)} bytes"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(count, dim).astype(np.float32)
