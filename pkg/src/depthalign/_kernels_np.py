"""Pure-numpy implementations of the per-pixel kernels.

This is the fallback backend used when the compiled extension is not
available (see kernels.py). Signatures and semantics match
_ckernels.pyx exactly; reductions accumulate in float64 regardless of
the input dtype.
"""

import numpy as np

BACKEND = "numpy"


def apply_alignment(y, alpha, beta):
    """out(x) = 1 / (alpha * y(x) + beta), computed in float64, cast back."""
    denom = np.float64(alpha) * y.astype(np.float64) + np.float64(beta)
    return (1.0 / denom).astype(y.dtype)


def masked_abs_sum(pred, gt, mask):
    """Sum of |pred - gt| over mask and the valid-pixel count."""
    m = mask.astype(bool)
    diff = pred.astype(np.float64)[m] - gt.astype(np.float64)[m]
    return float(np.abs(diff).sum()), int(m.sum())


def alignment_loss_grad(y, gt, mask, alpha, beta):
    """Masked-mean L1 between 1/(alpha*y+beta) and gt, with d/dalpha, d/dbeta.

    The subgradient of |r| at r = 0 is taken as 0. Returns
    (loss, dloss_dalpha, dloss_dbeta, n_valid); the gradient terms use
    dyhat/dalpha = -yhat^2 * y and dyhat/dbeta = -yhat^2.
    """
    m = mask.astype(bool)
    n = int(m.sum())
    if n == 0:
        return 0.0, 0.0, 0.0, 0
    yv = y.astype(np.float64)[m]
    gv = gt.astype(np.float64)[m]
    yhat = 1.0 / (float(alpha) * yv + float(beta))
    r = yhat - gv
    sgn = np.sign(r)
    loss = float(np.abs(r).sum()) / n
    common = sgn * yhat * yhat
    dalpha = float(-(common * yv).sum()) / n
    dbeta = float(-common.sum()) / n
    return loss, dalpha, dbeta, n


def metric_sums(pred, gt, mask):
    """Single-pass accumulators for the six depth metrics.

    Returns (n, abs_rel_sum, sq_sum, log10_sum, sqlog_sum, c1, c2, c3)
    where c_i counts pixels with max(pred/gt, gt/pred) < 1.25**i.
    Caller guarantees pred > 0 and gt > 0 on the mask.
    """
    m = mask.astype(bool)
    p = pred.astype(np.float64)[m]
    g = gt.astype(np.float64)[m]
    n = p.size
    diff = g - p
    abs_rel_sum = float((np.abs(diff) / g).sum())
    sq_sum = float((diff * diff).sum())
    lp = np.log(p)
    lg = np.log(g)
    ldiff = lg - lp
    log10_sum = float(np.abs(ldiff).sum()) / np.log(10.0)
    sqlog_sum = float((ldiff * ldiff).sum())
    ratio = np.maximum(p / g, g / p)
    c1 = int((ratio < 1.25).sum())
    c2 = int((ratio < 1.5625).sum())
    c3 = int((ratio < 1.953125).sum())
    return n, abs_rel_sum, sq_sum, log10_sum, sqlog_sum, c1, c2, c3


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """Fused in-place Adam step with bias correction; t is the step count
    after incrementing (t >= 1)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    mhat = m / bc1
    vhat = v / bc2
    p -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.dtype, copy=False)
