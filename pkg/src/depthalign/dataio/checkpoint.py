"""Binary checkpoints for the trainable head.

Layout: magic "RSAC", u32 version, the layer configuration, training
metadata (seed, epochs completed), then the flattened float32
parameters in canonical traversal order. load(save(p)) reproduces the
parameters bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..head import MlpConfig, MlpParameters

MAGIC = b"RSAC"
VERSION = 1


def save_checkpoint(path, params: MlpParameters, config: MlpConfig,
                    seed: int = 0, epochs_completed: int = 0) -> None:
    """Write parameters (cast to float32) plus config and metadata."""
    if not params.matches(config):
        raise DataError("parameter shapes do not match the given config")
    out = [MAGIC, struct.pack("<I", VERSION)]
    out.append(struct.pack("<I", config.input_dim))
    out.append(struct.pack("<d", config.leaky_slope))
    out.append(struct.pack("<I", len(config.trunk_dims)))
    out.append(struct.pack(f"<{len(config.trunk_dims)}I", *config.trunk_dims))
    out.append(struct.pack("<I", len(config.head_dims)))
    out.append(struct.pack(f"<{len(config.head_dims)}I", *config.head_dims))
    out.append(struct.pack("<qI", seed, epochs_completed))
    flat = params.flatten().astype("<f4")
    out.append(struct.pack("<Q", flat.size))
    out.append(flat.tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise DataError(
                f"{self.path}: truncated checkpoint at byte {self.pos}, "
                f"need {size} more bytes"
            )
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values


def load_checkpoint(path):
    """Read a checkpoint; returns (MlpParameters, MlpConfig, metadata)."""
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    (magic,) = r.take("<4s")
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.take("<I")
    if version != VERSION:
        raise DataError(
            f"{path}: unsupported checkpoint version {version}, "
            f"expected {VERSION}"
        )
    (input_dim,) = r.take("<I")
    (leaky_slope,) = r.take("<d")
    (n_trunk,) = r.take("<I")
    trunk_dims = r.take(f"<{n_trunk}I")
    (n_head,) = r.take("<I")
    head_dims = r.take(f"<{n_head}I")
    seed, epochs_completed = r.take("<qI")
    (n_params,) = r.take("<Q")
    config = MlpConfig(input_dim=input_dim, trunk_dims=trunk_dims,
                       head_dims=head_dims, leaky_slope=leaky_slope)
    if n_params != config.n_parameters:
        raise DataError(
            f"{path}: checkpoint declares {n_params} parameters but the "
            f"stored config implies {config.n_parameters}"
        )
    expected = r.pos + 4 * n_params
    if len(data) != expected:
        raise DataError(
            f"{path}: payload is {len(data) - r.pos} bytes, expected "
            f"{4 * n_params}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=r.pos).astype(np.float32)
    params = MlpParameters.from_flat(flat, config, dtype=np.float32)
    meta = {"seed": seed, "epochs_completed": epochs_completed}
    return params, config, meta
