"""Domain types for depth maps and the global inverse-depth alignment.

A relative (inverse) depth map y is aligned to metric depth through
yhat = 1 / (alpha * y + beta) with alpha, beta > 0. Larger inverse
depth means nearer surfaces, so yhat is strictly decreasing in y.

All types are immutable after construction (arrays are made
non-writeable) and every operation is a pure function, so shared
instances are safe to use from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NonFiniteError, NumericError


def _first_offender(bad: np.ndarray) -> tuple[int, int]:
    """(row, col) of the first True entry in a 2-D boolean array."""
    flat = int(np.argmax(bad))
    return flat // bad.shape[1], flat % bad.shape[1]


class DepthMap:
    """Dense per-pixel depth (or inverse depth) as a row-major float32 grid.

    Every stored value is finite; invalid pixels are expressed through a
    companion ValidityMask, never by sentinel values.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 2:
            raise ConfigError(f"depth map must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError(f"depth map has zero dimension: {arr.shape}")
        if not np.isfinite(arr).all():
            r, c = _first_offender(~np.isfinite(arr))
            raise NonFiniteError(
                f"non-finite depth value {arr[r, c]!r} at pixel ({r}, {c})"
            )
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("DepthMap is immutable")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        return isinstance(other, DepthMap) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"DepthMap({self.height}x{self.width})"


class ValidityMask:
    """One boolean per pixel marking coordinates with usable values."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=bool)
        if arr.ndim != 2:
            raise ConfigError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError(f"mask has zero dimension: {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ValidityMask is immutable")

    @classmethod
    def full(cls, height: int, width: int) -> "ValidityMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        """|M|, the number of valid pixels."""
        return int(self.bits.sum())

    def __and__(self, other: "ValidityMask") -> "ValidityMask":
        require_same_shape(self, other)
        return ValidityMask(self.bits & other.bits)

    def __repr__(self):
        return f"ValidityMask({self.shape[0]}x{self.shape[1]}, |M|={self.count})"


def require_same_shape(*items) -> None:
    shapes = {item.shape for item in items}
    if len(shapes) > 1:
        raise ConfigError(f"shape mismatch: {sorted(shapes)}")


@dataclass(frozen=True)
class ScaleShift:
    """The (alpha, beta) pair of the global inverse-depth transform.

    alpha is dimensionless, beta has units of inverse meters; both are
    strictly positive so the transform never divides by zero at y = 0.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise NonFiniteError(
                f"scale/shift must be finite, got ({self.alpha}, {self.beta})"
            )
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError(
                f"scale and shift must be > 0, got ({self.alpha}, {self.beta})"
            )


@dataclass(frozen=True)
class DepthRange:
    """Closed evaluation interval [min_m, max_m] in meters."""

    min_m: float
    max_m: float

    def __post_init__(self):
        object.__setattr__(self, "min_m", float(self.min_m))
        object.__setattr__(self, "max_m", float(self.max_m))
        if not (0 <= self.min_m < self.max_m):
            raise ConfigError(
                f"invalid depth range [{self.min_m}, {self.max_m}]"
            )


def apply_alignment(y: DepthMap, p: ScaleShift) -> DepthMap:
    """Metric depth yhat(x) = 1 / (p.alpha * y(x) + p.beta).

    y holds inverse relative depth and must be >= 0 everywhere, which
    together with beta > 0 makes every output finite and positive.
    """
    if (y.values < 0).any():
        r, c = _first_offender(y.values < 0)
        raise NumericError(
            f"inverse depth must be >= 0, got {y.values[r, c]} at ({r}, {c})"
        )
    return DepthMap(kernels.apply_alignment(y.values, p.alpha, p.beta))


def invert(d: DepthMap, eps: float = 1e-6) -> DepthMap:
    """Pointwise 1 / max(d, eps); moves between depth and inverse depth.

    Involutive up to eps on values above eps.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    clamped = np.maximum(d.values.astype(np.float64), eps)
    return DepthMap((1.0 / clamped).astype(np.float32))


def clamp_to_range(d: DepthMap, r: DepthRange) -> DepthMap:
    """Clip every value into the closed interval [r.min_m, r.max_m]."""
    return DepthMap(np.clip(d.values, r.min_m, r.max_m))


def mask_from_ground_truth(gt: DepthMap, r: DepthRange) -> ValidityMask:
    """Valid iff gt(x) > 0 and r.min_m <= gt(x) <= r.max_m (closed interval)."""
    v = gt.values
    return ValidityMask((v > 0) & (v >= r.min_m) & (v <= r.max_m))
