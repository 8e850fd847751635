"""Non-language scaling baselines: median scaling, per-image linear
least-squares alignment, and a single dataset-global scale/shift.

Median scaling and the linear fit consume ground truth at alignment
time, so they are oracle upper bounds. The global fit consumes ground
truth only while fitting on a training set; the fitted pair is then
shared by every image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DepthMap, ScaleShift, ValidityMask, invert, require_same_shape
from .errors import ConfigError, EmptyMaskError, NumericError, SingularFitError


def lower_median(values: np.ndarray) -> float:
    """Median by the lower-median convention: always an observed value,
    no averaging for even-sized inputs."""
    v = np.sort(values, axis=None)
    return float(v[(v.size - 1) // 2])


@dataclass(frozen=True)
class FitResult:
    """Least-squares pair (scale, shift), unconstrained in sign, with the
    attained sum of squared errors over the valid pixels."""

    scale: float
    shift: float
    residual: float
    n_valid: int
    space: str = "inverse"


def median_scale(pred_inv: DepthMap, gt: DepthMap, m: ValidityMask,
                 eps: float = 1e-6) -> DepthMap:
    """Scale predicted depth so its masked median matches the ground truth.

    The prediction is moved to depth space first (d = 1/max(pred, eps)),
    then scaled by median(gt|M) / median(d|M). Output pixels are computed
    as (d / median_d) * median_gt so the anchoring is exact: the median
    of the output over M equals the median of gt over M bit for bit when
    |M| is odd.
    """
    require_same_shape(pred_inv, gt, m)
    if m.count < 1:
        raise EmptyMaskError("median scaling needs at least one valid pixel")
    d = invert(pred_inv, eps)
    med_d = lower_median(d.values[m.bits])
    med_gt = lower_median(gt.values[m.bits])
    if med_d == 0:
        raise NumericError("degenerate scale: masked median of prediction is 0")
    return DepthMap((d.values / np.float32(med_d)) * np.float32(med_gt))


def _solve_two_param(x: np.ndarray, target: np.ndarray, image_id=None):
    """Closed-form 2x2 normal equations for argmin sum (s*x + t - target)^2."""
    x64 = x.astype(np.float64)
    t64 = target.astype(np.float64)
    n = float(x64.size)
    sx = float(x64.sum())
    sxx = float((x64 * x64).sum())
    sg = float(t64.sum())
    sxg = float((x64 * t64).sum())
    det = n * sxx - sx * sx
    scale_ref = max(n * sxx, sx * sx)
    if scale_ref == 0 or abs(det) < 1e-12 * scale_ref:
        raise SingularFitError(
            "singular normal system: prediction has no spread over the mask",
            image_id=image_id,
        )
    s = (n * sxg - sx * sg) / det
    t = (sxx * sg - sx * sxg) / det
    r = s * x64 + t - t64
    return s, t, float((r * r).sum())


def linear_fit_inverse(pred_inv: DepthMap, gt: DepthMap, m: ValidityMask,
                       eps: float = 1e-6, image_id=None) -> FitResult:
    """Per-image least-squares (s, t) aligning prediction to ground truth
    in inverse-depth space: argmin sum_M (s*pred + t - 1/max(gt, eps))^2."""
    require_same_shape(pred_inv, gt, m)
    n = m.count
    if n < 2:
        raise EmptyMaskError(f"linear fit needs |M| >= 2, got {n}")
    g = invert(gt, eps)
    s, t, residual = _solve_two_param(
        pred_inv.values[m.bits], g.values[m.bits], image_id=image_id
    )
    return FitResult(s, t, residual, n, space="inverse")


def linear_fit_metric(pred_inv: DepthMap, gt: DepthMap, m: ValidityMask,
                      eps: float = 1e-6, image_id=None) -> FitResult:
    """Variant fitting in metric-depth space: argmin sum_M
    (s * (1/max(pred, eps)) + t - gt)^2."""
    require_same_shape(pred_inv, gt, m)
    n = m.count
    if n < 2:
        raise EmptyMaskError(f"linear fit needs |M| >= 2, got {n}")
    d = invert(pred_inv, eps)
    s, t, residual = _solve_two_param(
        d.values[m.bits], gt.values[m.bits], image_id=image_id
    )
    return FitResult(s, t, residual, n, space="metric")


def apply_fit(pred_inv: DepthMap, fit: FitResult,
              eps: float = 1e-6) -> tuple[DepthMap, int]:
    """Convert a fitted prediction to metric depth.

    Inverse-space fits produce 1 / max(s*pred + t, eps); metric-space
    fits produce max(s*(1/max(pred, eps)) + t, eps). Returns the depth
    map and the number of pixels that hit the eps clamp.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    if fit.space == "inverse":
        aligned = fit.scale * pred_inv.values.astype(np.float64) + fit.shift
        clamped = int((aligned < eps).sum())
        depth = 1.0 / np.maximum(aligned, eps)
    elif fit.space == "metric":
        d = invert(pred_inv, eps)
        aligned = fit.scale * d.values.astype(np.float64) + fit.shift
        clamped = int((aligned < eps).sum())
        depth = np.maximum(aligned, eps)
    else:
        raise ConfigError(f"unknown fit space {fit.space!r}")
    return DepthMap(depth.astype(np.float32)), clamped


@dataclass(frozen=True)
class GlobalFitConfig:
    """Full-batch Adam settings for the dataset-global fit. The pair is
    optimized as (log alpha, log beta) so positivity needs no projection;
    the learning rate follows a cosine decay from lr to lr_min so the
    constant-magnitude L1 gradient cannot keep the iterate oscillating."""

    steps: int = 1000
    lr: float = 0.1
    lr_min: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    init_alpha: float = 1.0
    init_beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not (0 < self.lr_min <= self.lr):
            raise ConfigError(
                f"need 0 < lr_min <= lr, got {self.lr_min}, {self.lr}"
            )
        if self.init_alpha <= 0 or self.init_beta <= 0:
            raise ConfigError("initial scale and shift must be > 0")


def global_loss(dataset, alpha: float, beta: float) -> float:
    """Mean over samples of the per-sample masked L1 alignment loss."""
    total = 0.0
    used = 0
    for pred_inv, gt, m in dataset:
        loss, _, _, n = kernels.alignment_loss_grad(
            pred_inv.values, gt.values, m.bits, alpha, beta
        )
        if n > 0:
            total += loss
            used += 1
    if used == 0:
        raise EmptyMaskError("global fit: no sample has a valid pixel")
    return total / used


def global_fit(dataset, cfg: GlobalFitConfig = GlobalFitConfig()) -> ScaleShift:
    """One positive (alpha, beta) minimizing the mean masked L1 loss over
    the whole dataset, by full-batch Adam on (log alpha, log beta).

    Deterministic for a given config and sample order. A non-finite loss
    aborts with the last finite iterate in the error message.
    """
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("global fit needs at least one sample")
    for pred_inv, gt, m in dataset:
        require_same_shape(pred_inv, gt, m)
    if not any(m.count >= 1 for _, _, m in dataset):
        raise EmptyMaskError("global fit: no sample has a valid pixel")

    log_p = np.array(
        [np.log(cfg.init_alpha), np.log(cfg.init_beta)], dtype=np.float64
    )
    m_state = np.zeros(2)
    v_state = np.zeros(2)
    last_finite = (cfg.init_alpha, cfg.init_beta, None)
    for step in range(cfg.steps):
        alpha, beta = float(np.exp(log_p[0])), float(np.exp(log_p[1]))
        loss_sum = 0.0
        da_sum = 0.0
        db_sum = 0.0
        used = 0
        for pred_inv, gt, m in dataset:
            loss, da, db, n = kernels.alignment_loss_grad(
                pred_inv.values, gt.values, m.bits, alpha, beta
            )
            if n > 0:
                loss_sum += loss
                da_sum += da
                db_sum += db
                used += 1
        loss = loss_sum / used
        if not np.isfinite(loss):
            a, b, lo = last_finite
            raise NumericError(
                f"global fit diverged at step {step}; last finite iterate "
                f"alpha={a:.6g} beta={b:.6g} loss={lo}"
            )
        last_finite = (alpha, beta, loss)
        lr = cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (
            1.0 + np.cos(np.pi * step / cfg.steps)
        )
        # chain rule through the log parameterization
        grad = np.array([da_sum / used * alpha, db_sum / used * beta])
        kernels.adam_update(log_p, grad, m_state, v_state, lr,
                            cfg.beta1, cfg.beta2, cfg.adam_eps, step + 1)
    return ScaleShift(float(np.exp(log_p[0])), float(np.exp(log_p[1])))
