# Compiled per-pixel kernels: the hot inner loops of alignment, training
# and evaluation. Mirrors _kernels_np.py; reductions accumulate in double.

import numpy as np

cimport cython
from libc.math cimport fabs, log, sqrt

BACKEND = "compiled"

ctypedef fused floating:
    float
    double

DEF LN10 = 2.302585092994045684017991454684364208


cdef void _apply_impl(const floating[::1] y, floating[::1] out,
                      double alpha, double beta) noexcept nogil:
    cdef Py_ssize_t i, n = y.shape[0]
    for i in range(n):
        out[i] = <floating>(1.0 / (alpha * <double>y[i] + beta))


def apply_alignment(y, double alpha, double beta):
    """out(x) = 1 / (alpha * y(x) + beta), computed in float64, cast back."""
    y = np.ascontiguousarray(y)
    out = np.empty_like(y)
    if y.dtype == np.float32:
        _apply_impl[float](y.ravel(), out.ravel(), alpha, beta)
    else:
        _apply_impl[double](y.ravel(), out.ravel(), alpha, beta)
    return out


cdef double _masked_abs_impl(const floating[::1] pred, const floating[::1] gt,
                             const unsigned char[::1] mask,
                             Py_ssize_t* count) noexcept nogil:
    cdef Py_ssize_t i, n = pred.shape[0], c = 0
    cdef double acc = 0.0
    for i in range(n):
        if mask[i]:
            acc += fabs(<double>pred[i] - <double>gt[i])
            c += 1
    count[0] = c
    return acc


def masked_abs_sum(pred, gt, mask):
    """Sum of |pred - gt| over mask and the valid-pixel count."""
    pred = np.ascontiguousarray(pred)
    gt = np.ascontiguousarray(gt)
    m = np.ascontiguousarray(mask, dtype=np.uint8).ravel()
    cdef Py_ssize_t count = 0
    cdef double acc
    if pred.dtype == np.float32:
        acc = _masked_abs_impl[float](pred.ravel(), gt.ravel(), m, &count)
    else:
        acc = _masked_abs_impl[double](pred.ravel(), gt.ravel(), m, &count)
    return acc, int(count)


cdef void _loss_grad_impl(const floating[::1] y, const floating[::1] gt,
                          const unsigned char[::1] mask,
                          double alpha, double beta,
                          double* out) noexcept nogil:
    cdef Py_ssize_t i, n = y.shape[0], c = 0
    cdef double yv, gv, yhat, r, sgn, common
    cdef double loss = 0.0, dalpha = 0.0, dbeta = 0.0
    for i in range(n):
        if mask[i]:
            yv = <double>y[i]
            gv = <double>gt[i]
            yhat = 1.0 / (alpha * yv + beta)
            r = yhat - gv
            sgn = 0.0 if r == 0.0 else (1.0 if r > 0.0 else -1.0)
            loss += fabs(r)
            common = sgn * yhat * yhat
            dalpha -= common * yv
            dbeta -= common
            c += 1
    out[0] = loss
    out[1] = dalpha
    out[2] = dbeta
    out[3] = <double>c


def alignment_loss_grad(y, gt, mask, double alpha, double beta):
    """Masked-mean L1 between 1/(alpha*y+beta) and gt, with d/dalpha, d/dbeta.

    The subgradient of |r| at r = 0 is taken as 0. Returns
    (loss, dloss_dalpha, dloss_dbeta, n_valid).
    """
    y = np.ascontiguousarray(y)
    gt = np.ascontiguousarray(gt)
    m = np.ascontiguousarray(mask, dtype=np.uint8).ravel()
    cdef double out[4]
    if y.dtype == np.float32:
        _loss_grad_impl[float](y.ravel(), gt.ravel(), m, alpha, beta, out)
    else:
        _loss_grad_impl[double](y.ravel(), gt.ravel(), m, alpha, beta, out)
    cdef Py_ssize_t n = <Py_ssize_t>out[3]
    if n == 0:
        return 0.0, 0.0, 0.0, 0
    return out[0] / n, out[1] / n, out[2] / n, int(n)


cdef void _metric_impl(const floating[::1] pred, const floating[::1] gt,
                       const unsigned char[::1] mask,
                       double* out) noexcept nogil:
    cdef Py_ssize_t i, n = pred.shape[0]
    cdef double p, g, diff, ldiff, ratio
    cdef double cnt = 0, abs_rel = 0, sq = 0, l10 = 0, sqlog = 0
    cdef double c1 = 0, c2 = 0, c3 = 0
    for i in range(n):
        if mask[i]:
            p = <double>pred[i]
            g = <double>gt[i]
            diff = g - p
            abs_rel += fabs(diff) / g
            sq += diff * diff
            ldiff = log(g) - log(p)
            l10 += fabs(ldiff)
            sqlog += ldiff * ldiff
            ratio = p / g if p > g else g / p
            if ratio < 1.25:
                c1 += 1
            if ratio < 1.5625:
                c2 += 1
            if ratio < 1.953125:
                c3 += 1
            cnt += 1
    out[0] = cnt
    out[1] = abs_rel
    out[2] = sq
    out[3] = l10 / LN10
    out[4] = sqlog
    out[5] = c1
    out[6] = c2
    out[7] = c3


def metric_sums(pred, gt, mask):
    """Single-pass accumulators for the six depth metrics.

    Returns (n, abs_rel_sum, sq_sum, log10_sum, sqlog_sum, c1, c2, c3)
    where c_i counts pixels with max(pred/gt, gt/pred) < 1.25**i.
    Caller guarantees pred > 0 and gt > 0 on the mask.
    """
    pred = np.ascontiguousarray(pred)
    gt = np.ascontiguousarray(gt)
    m = np.ascontiguousarray(mask, dtype=np.uint8).ravel()
    cdef double out[8]
    if pred.dtype == np.float32:
        _metric_impl[float](pred.ravel(), gt.ravel(), m, out)
    else:
        _metric_impl[double](pred.ravel(), gt.ravel(), m, out)
    return (int(out[0]), out[1], out[2], out[3], out[4],
            int(out[5]), int(out[6]), int(out[7]))


cdef void _adam_impl(floating[::1] p, const floating[::1] g,
                     floating[::1] m, floating[::1] v,
                     floating lr, floating beta1, floating beta2,
                     floating omb1, floating omb2,
                     floating eps, double bc1, double bc2) noexcept nogil:
    cdef Py_ssize_t i, n = p.shape[0]
    cdef floating mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + omb1 * g[i]
        v[i] = beta2 * v[i] + omb2 * (g[i] * g[i])
        mhat = m[i] / <floating>bc1
        vhat = v[i] / <floating>bc2
        p[i] = p[i] - lr * mhat / (<floating>sqrt(<double>vhat) + eps)


def adam_update(p, g, m, v, double lr, double beta1, double beta2,
                double eps, long t):
    """Fused in-place Adam step with bias correction; t is the step count
    after incrementing (t >= 1)."""
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    # 1 - beta computed in double then rounded, matching the numpy path
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    if p.dtype == np.float32:
        _adam_impl[float](p.ravel(), g.ravel(), m.ravel(), v.ravel(),
                          <float>lr, <float>beta1, <float>beta2,
                          <float>omb1, <float>omb2, <float>eps, bc1, bc2)
    else:
        _adam_impl[double](p.ravel(), g.ravel(), m.ravel(), v.ravel(),
                           lr, beta1, beta2, omb1, omb2, eps, bc1, bc2)
