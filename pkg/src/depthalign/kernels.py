"""Kernel backend selection.

Imports the compiled extension when available and falls back to the
pure-numpy implementations otherwise. Set DEPTHALIGN_FORCE_NUMPY=1 to
force the fallback (used by the benchmark and the backend-equivalence
tests). `BACKEND` names the active implementation.
"""

import os

if os.environ.get("DEPTHALIGN_FORCE_NUMPY"):
    from . import _kernels_np as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_np as _impl

BACKEND = _impl.BACKEND
apply_alignment = _impl.apply_alignment
masked_abs_sum = _impl.masked_abs_sum
alignment_loss_grad = _impl.alignment_loss_grad
metric_sums = _impl.metric_sums
adam_update = _impl.adam_update
