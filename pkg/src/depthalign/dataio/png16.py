"""16-bit grayscale PNG codec for metric depth maps.

Depth is stored as round(depth * scale_divisor) in a single 16-bit
channel; a raw value of 0 marks an invalid pixel. The default divisor
256 matches the usual KITTI encoding, 1000 the usual NYU-style
millimeter encoding.

The codec is self-contained on zlib so that write(read(f)) reproduces
f byte for byte: the writer always emits filter type 0 scanlines at a
fixed compression level, while the reader accepts any of the five
standard scanline filters.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..core import DepthMap, ValidityMask
from ..errors import ConfigError, DataError

KITTI_DIVISOR = 256.0
NYU_DIVISOR = 1000.0

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_COMPRESSION_LEVEL = 6


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def write_png16_gray(path, raw: np.ndarray) -> None:
    """Write a uint16 (H, W) array as a 16-bit grayscale PNG."""
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.dtype != np.uint16:
        raise ConfigError(
            f"expected a 2-D uint16 array, got {raw.dtype} {raw.shape}"
        )
    h, w = raw.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 16, 0, 0, 0, 0)
    big = raw.astype(">u2").tobytes()
    stride = 2 * w
    scanlines = b"".join(
        b"\x00" + big[r * stride:(r + 1) * stride] for r in range(h)
    )
    idat = zlib.compress(scanlines, _COMPRESSION_LEVEL)
    data = (_SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat)
            + _chunk(b"IEND", b""))
    Path(path).write_bytes(data)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(decompressed: bytes, h: int, w: int, path) -> np.ndarray:
    bpp = 2
    stride = bpp * w
    expected = h * (1 + stride)
    if len(decompressed) != expected:
        raise DataError(
            f"{path}: truncated image data, expected {expected} bytes "
            f"after decompression, got {len(decompressed)}"
        )
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for r in range(h):
        ftype = decompressed[pos]
        pos += 1
        line = np.frombuffer(decompressed, dtype=np.uint8,
                             count=stride, offset=pos).copy()
        pos += stride
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            line = (line.astype(np.uint16) + prev).astype(np.uint8)
        elif ftype == 3:  # Average
            for i in range(stride):
                left = int(line[i - bpp]) if i >= bpp else 0
                line[i] = (line[i] + (left + int(prev[i])) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                left = int(line[i - bpp]) if i >= bpp else 0
                upleft = int(prev[i - bpp]) if i >= bpp else 0
                line[i] = (line[i] + _paeth(left, int(prev[i]), upleft)) & 0xFF
        else:
            raise DataError(f"{path}: unknown scanline filter {ftype} in row {r}")
        out[r] = line
        prev = out[r]
    return out.reshape(h, w, 2)


def read_png16_gray(path) -> np.ndarray:
    """Read a 16-bit grayscale PNG into a uint16 (H, W) array."""
    data = Path(path).read_bytes()
    if len(data) < len(_SIGNATURE) or data[:8] != _SIGNATURE:
        raise DataError(f"{path}: not a PNG file (bad signature)")
    pos = 8
    header = None
    idat = b""
    while pos < len(data):
        if pos + 8 > len(data):
            raise DataError(f"{path}: truncated chunk header at byte {pos}")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        end = pos + 8 + length
        if end + 4 > len(data):
            raise DataError(
                f"{path}: truncated {tag!r} chunk at byte {pos} "
                f"(need {length + 12} bytes, have {len(data) - pos})"
            )
        payload = data[pos + 8:end]
        (crc,) = struct.unpack(">I", data[end:end + 4])
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise DataError(f"{path}: CRC mismatch in {tag!r} chunk at byte {pos}")
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
        pos = end + 4
    if header is None:
        raise DataError(f"{path}: missing IHDR chunk")
    w, h, depth, color, comp, filt, interlace = header
    if depth != 16 or color != 0:
        raise DataError(
            f"{path}: expected 16-bit single-channel PNG, got bit depth "
            f"{depth}, color type {color}"
        )
    if comp != 0 or filt != 0 or interlace != 0:
        raise DataError(f"{path}: unsupported compression/filter/interlace")
    if not idat:
        raise DataError(f"{path}: missing IDAT chunk")
    try:
        decompressed = zlib.decompress(idat)
    except zlib.error as exc:
        raise DataError(f"{path}: corrupt image data ({exc})") from exc
    pairs = _unfilter(decompressed, h, w, path)
    return (pairs[:, :, 0].astype(np.uint16) << 8) | pairs[:, :, 1]


def write_depth_png16(path, depth: DepthMap, mask: ValidityMask | None = None,
                      scale_divisor: float = KITTI_DIVISOR) -> None:
    """Encode depth in meters as raw = round(depth * scale_divisor).

    Pixels outside the mask are written as raw 0 (invalid). Values that
    quantize outside [1, 65535] cannot round-trip and are clipped.
    """
    if scale_divisor <= 0:
        raise ConfigError(f"scale_divisor must be > 0, got {scale_divisor}")
    raw = np.rint(depth.values.astype(np.float64) * scale_divisor)
    raw = np.clip(raw, 0, 65535).astype(np.uint16)
    if mask is not None:
        if mask.shape != depth.shape:
            raise ConfigError(
                f"mask shape {mask.shape} != depth shape {depth.shape}"
            )
        raw = np.where(mask.bits, raw, 0).astype(np.uint16)
    write_png16_gray(path, raw)


def read_depth_png16(path, scale_divisor: float = KITTI_DIVISOR):
    """Decode depth = raw / scale_divisor; raw 0 marks invalid pixels.

    Returns (DepthMap, ValidityMask).
    """
    if scale_divisor <= 0:
        raise ConfigError(f"scale_divisor must be > 0, got {scale_divisor}")
    raw = read_png16_gray(path)
    depth = raw.astype(np.float32) / np.float32(scale_divisor)
    return DepthMap(depth), ValidityMask(raw != 0)
