"""Portable Float Map reader/writer for relative (inverse) depth maps.

Only grayscale "Pf" maps are handled; color "PF" files are rejected.
Rows are stored bottom-to-top per the format, and the sign of the
scale line selects the payload endianness (negative = little-endian).
Round trips are exact for finite float32 values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..core import DepthMap
from ..errors import DataError


def write_pfm(path, d: DepthMap) -> None:
    """Write a grayscale PFM (little-endian, scale -1.0)."""
    header = f"Pf\n{d.width} {d.height}\n-1.0\n".encode("ascii")
    payload = np.flipud(d.values).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def _read_token_line(data: bytes, pos: int, path, what: str):
    end = data.find(b"\n", pos)
    if end < 0:
        raise DataError(f"{path}: truncated header, missing {what} line")
    return data[pos:end].decode("ascii", errors="replace").strip(), end + 1


def read_pfm(path) -> DepthMap:
    """Read a grayscale PFM into a DepthMap."""
    data = Path(path).read_bytes()
    magic, pos = _read_token_line(data, 0, path, "magic")
    if magic == "PF":
        raise DataError(f"{path}: color PFM not supported, expected 'Pf'")
    if magic != "Pf":
        raise DataError(f"{path}: not a PFM file (magic {magic!r})")
    dims, pos = _read_token_line(data, pos, path, "dimensions")
    parts = dims.split()
    if len(parts) != 2:
        raise DataError(f"{path}: malformed dimensions line {dims!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise DataError(f"{path}: malformed dimensions line {dims!r}") from exc
    if width < 1 or height < 1:
        raise DataError(f"{path}: bad dimensions {width}x{height}")
    scale_line, pos = _read_token_line(data, pos, path, "scale")
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise DataError(f"{path}: malformed scale line {scale_line!r}") from exc
    if scale == 0:
        raise DataError(f"{path}: zero scale is invalid")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = 4 * width * height
    payload = data[pos:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for {width}x{height}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return DepthMap(np.flipud(values.astype(np.float32)))
