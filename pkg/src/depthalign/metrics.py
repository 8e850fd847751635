"""Depth evaluation metrics and report aggregation.

Six metrics over valid pixels of each image: mean absolute relative
error, RMSE, mean absolute log10 error, RMSE of natural-log errors,
and three threshold accuracies delta_i = fraction of pixels with
max(pred/gt, gt/pred) < 1.25**i. The threshold comparison is strict,
so a pixel exactly at the ratio bound counts as a failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DepthMap, ValidityMask, require_same_shape
from .errors import ConfigError, EmptyMaskError, NumericError

CSV_FIELDS = ("abs_rel", "rmse", "log10", "rmse_log",
              "delta1", "delta2", "delta3", "n_pixels", "n_images")


@dataclass(frozen=True)
class MetricReport:
    """The six-metric bundle for one image or an aggregated set."""

    abs_rel: float
    rmse: float
    log10: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    n_images: int = 1
    aggregation: str = "single"

    def to_kv_text(self) -> str:
        """Flat key=value lines, one metric per line."""
        lines = [f"{name}={getattr(self, name)!r}" for name in CSV_FIELDS]
        lines.append(f"aggregation={self.aggregation}")
        return "\n".join(lines) + "\n"

    def csv_row(self) -> list:
        return [getattr(self, name) for name in CSV_FIELDS]


def _crop_mask(shape, crop) -> np.ndarray:
    r0, r1, c0, c1 = crop
    h, w = shape
    if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
        raise ConfigError(f"crop {crop} outside image of shape {shape}")
    keep = np.zeros(shape, dtype=bool)
    keep[r0:r1, c0:c1] = True
    return keep


def evaluate(pred: DepthMap, gt: DepthMap, m: ValidityMask,
             crop=None) -> MetricReport:
    """Per-image metrics over the valid pixels.

    Requires pred > 0 and gt > 0 wherever the mask is set (the log
    metrics are undefined otherwise). crop, when given, is a
    (row0, row1, col0, col1) rectangle; pixels outside it are ignored.
    """
    require_same_shape(pred, gt, m)
    bits = m.bits
    if crop is not None:
        bits = bits & _crop_mask(m.shape, crop)
    n = int(bits.sum())
    if n == 0:
        raise EmptyMaskError("evaluation needs at least one valid pixel")
    for name, arr in (("prediction", pred.values), ("ground truth", gt.values)):
        bad = bits & (arr <= 0)
        if bad.any():
            flat = int(np.argmax(bad))
            r, c = flat // bad.shape[1], flat % bad.shape[1]
            raise NumericError(
                f"{name} must be > 0 on valid pixels, got {arr[r, c]} "
                f"at ({r}, {c})"
            )
    n, abs_rel_sum, sq_sum, log10_sum, sqlog_sum, c1, c2, c3 = (
        kernels.metric_sums(pred.values, gt.values, bits)
    )
    return MetricReport(
        abs_rel=abs_rel_sum / n,
        rmse=float(np.sqrt(sq_sum / n)),
        log10=log10_sum / n,
        rmse_log=float(np.sqrt(sqlog_sum / n)),
        delta1=c1 / n,
        delta2=c2 / n,
        delta3=c3 / n,
        n_pixels=n,
    )


def aggregate(reports, mode: str = "image-mean") -> MetricReport:
    """Combine per-image reports into one dataset report.

    image-mean weights every image equally; pixel-mean weights each
    report by its pixel count. The mode is recorded in the result.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("aggregate needs at least one report")
    if mode == "image-mean":
        weights = np.ones(len(reports))
    elif mode == "pixel-mean":
        weights = np.array([r.n_pixels for r in reports], dtype=np.float64)
    else:
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    weights = weights / weights.sum()
    fields = ("abs_rel", "rmse", "log10", "rmse_log",
              "delta1", "delta2", "delta3")
    means = {
        name: float(sum(w * getattr(r, name) for w, r in zip(weights, reports)))
        for name in fields
    }
    return MetricReport(
        n_pixels=sum(r.n_pixels for r in reports),
        n_images=sum(r.n_images for r in reports),
        aggregation=mode,
        **means,
    )


@dataclass(frozen=True)
class InverseFit:
    """Least-squares coefficient of v ~ a / m and the fit's R^2."""

    coefficient: float
    r_squared: float
    n_points: int


def fit_inverse_proportional(points) -> InverseFit:
    """Fit v = a / m to (m, v) pairs by least squares.

    a = sum(v/m) / sum(1/m^2) in closed form. Used as the diagnostic
    relating predicted inverse-depth scales to the median scene depth:
    larger scenes should be predicted with smaller scale.
    """
    points = list(points)
    if not points:
        raise ConfigError("inverse-proportional fit needs at least one point")
    m = np.array([p[0] for p in points], dtype=np.float64)
    v = np.array([p[1] for p in points], dtype=np.float64)
    if (m <= 0).any():
        raise NumericError("all abscissae must be > 0 for the inverse fit")
    a = float((v / m).sum() / (1.0 / (m * m)).sum())
    residuals = v - a / m
    ss_res = float((residuals * residuals).sum())
    centered = v - v.mean()
    ss_tot = float((centered * centered).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if np.isclose(ss_res, 0.0) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return InverseFit(a, r2, len(points))


def scale_depth_diagnostic(samples) -> list[tuple[float, float]]:
    """(median ground-truth depth, predicted scale) points for
    fit_inverse_proportional, one per sample.

    samples yields (gt: DepthMap, mask: ValidityMask, pair: ScaleShift).
    """
    points = []
    for gt, m, pair in samples:
        if m.count == 0:
            raise EmptyMaskError("diagnostic sample has no valid pixels")
        med = float(np.median(gt.values[m.bits]))
        points.append((med, pair.alpha))
    return points
