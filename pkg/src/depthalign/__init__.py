"""depthalign: align relative (inverse) monocular depth to metric scale.

A relative depth map y relates to metric depth through a global linear
transform in inverse-depth space, yhat = 1 / (alpha * y + beta). This
package provides the transform and its domain types, three analytic
baselines for recovering (alpha, beta) from ground truth, a trainable
head that predicts the pair from a text embedding, the standard
six-metric depth evaluation, the file formats to move all of it on and
off disk, and a CLI binding them into train / align / eval / synth
workflows.
"""

from .baselines import (
    FitResult,
    GlobalFitConfig,
    apply_fit,
    global_fit,
    linear_fit_inverse,
    linear_fit_metric,
    median_scale,
)
from .core import (
    DepthMap,
    DepthRange,
    ScaleShift,
    ValidityMask,
    apply_alignment,
    clamp_to_range,
    invert,
    mask_from_ground_truth,
)
from .errors import (
    ConfigError,
    DataError,
    DepthAlignError,
    EmptyMaskError,
    NonFiniteError,
    NumericError,
    SingularFitError,
)
from .head import (
    AdamState,
    MlpConfig,
    MlpParameters,
    TextEmbedding,
    TrainConfig,
    adam_step,
    cosine_lr,
    forward,
    loss_and_gradient,
    masked_l1_loss,
    predict,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import (
    InverseFit,
    MetricReport,
    aggregate,
    evaluate,
    fit_inverse_proportional,
    scale_depth_diagnostic,
)
from .training import evaluate_on_dataset, load_dataset, sample_caption, train

__version__ = "0.1.0"

__all__ = [
    "FitResult", "GlobalFitConfig", "apply_fit", "global_fit",
    "linear_fit_inverse", "linear_fit_metric", "median_scale",
    "DepthMap", "DepthRange", "ScaleShift", "ValidityMask",
    "apply_alignment", "clamp_to_range", "invert", "mask_from_ground_truth",
    "ConfigError", "DataError", "DepthAlignError", "EmptyMaskError",
    "NonFiniteError", "NumericError", "SingularFitError",
    "AdamState", "MlpConfig", "MlpParameters", "TextEmbedding",
    "TrainConfig", "adam_step", "cosine_lr", "forward", "loss_and_gradient",
    "masked_l1_loss", "predict",
    "KERNEL_BACKEND",
    "InverseFit", "MetricReport", "aggregate", "evaluate",
    "fit_inverse_proportional", "scale_depth_diagnostic",
    "evaluate_on_dataset", "load_dataset", "sample_caption", "train",
    "__version__",
]
