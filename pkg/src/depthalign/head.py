"""Trainable head mapping a text embedding to the (alpha, beta) transform.

Architecture: a shared MLP trunk projects the embedding to a feature
vector, then two separate MLP stacks output one scalar each. LeakyReLU
follows every linear layer except the last of each stack, and the two
scalar outputs pass through exp, so the predicted scale and shift are
always positive. Gradients are exact reverse-mode derivatives computed
by hand-written backprop over this fixed graph.

Parameters are stored float32 by default; the finite-difference oracle
in the tests runs the same code in float64 end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DepthMap, ScaleShift, ValidityMask, require_same_shape
from .errors import ConfigError, EmptyMaskError, NonFiniteError, NumericError

DEFAULT_TRUNK_DIMS = (512, 512, 512, 256, 256)
DEFAULT_HEAD_DIMS = (256, 128, 128, 64, 1)


@dataclass(frozen=True)
class TextEmbedding:
    """Fixed-length float32 feature vector of one caption."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim != 1 or arr.size < 1:
            raise ConfigError(f"embedding must be a 1-D vector, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("embedding contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MlpConfig:
    """Layer widths of the trunk and of the two output stacks.

    trunk_dims are the output widths of the trunk layers starting from
    input_dim; head_dims likewise starting from the trunk's last width.
    Both output stacks share head_dims and must end at width 1.
    """

    input_dim: int = 1024
    trunk_dims: tuple[int, ...] = DEFAULT_TRUNK_DIMS
    head_dims: tuple[int, ...] = DEFAULT_HEAD_DIMS
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "trunk_dims", tuple(self.trunk_dims))
        object.__setattr__(self, "head_dims", tuple(self.head_dims))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.trunk_dims or any(d < 1 for d in self.trunk_dims):
            raise ConfigError(f"bad trunk dims {self.trunk_dims}")
        if not self.head_dims or any(d < 1 for d in self.head_dims):
            raise ConfigError(f"bad head dims {self.head_dims}")
        if self.head_dims[-1] != 1:
            raise ConfigError("each output stack must end at width 1")
        if not (0 <= self.leaky_slope < 1):
            raise ConfigError(f"bad leaky slope {self.leaky_slope}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) of every linear layer in traversal order."""
        shapes = []
        widths = (self.input_dim,) + self.trunk_dims
        shapes += [(o, i) for i, o in zip(widths[:-1], widths[1:])]
        widths = (self.trunk_dims[-1],) + self.head_dims
        head = [(o, i) for i, o in zip(widths[:-1], widths[1:])]
        return shapes + head + head

    @property
    def n_parameters(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


class MlpParameters:
    """Weights and biases of the trunk and the two output stacks.

    Stored as lists of [w, b] per layer with w of shape (out, in).
    Traversal order (trunk, scale stack, shift stack; w before b) is
    the canonical order for flattening, Adam state, and checkpoints.
    """

    __slots__ = ("trunk", "scale_head", "shift_head")

    def __init__(self, trunk, scale_head, shift_head):
        self.trunk = trunk
        self.scale_head = scale_head
        self.shift_head = shift_head

    @classmethod
    def init(cls, config: MlpConfig, seed: int, dtype=np.float32):
        """Seeded uniform init: w ~ U(+-sqrt(1/fan_in)), b = 0."""
        rng = np.random.default_rng(seed)
        n_trunk = len(config.trunk_dims)
        n_head = len(config.head_dims)
        layers = []
        for out, inp in config.layer_shapes():
            lim = math.sqrt(1.0 / inp)
            w = rng.uniform(-lim, lim, size=(out, inp)).astype(dtype)
            b = np.zeros(out, dtype=dtype)
            layers.append([w, b])
        return cls(
            layers[:n_trunk],
            layers[n_trunk:n_trunk + n_head],
            layers[n_trunk + n_head:],
        )

    @classmethod
    def zeros(cls, config: MlpConfig, dtype=np.float32):
        n_trunk = len(config.trunk_dims)
        n_head = len(config.head_dims)
        layers = [
            [np.zeros((out, inp), dtype=dtype), np.zeros(out, dtype=dtype)]
            for out, inp in config.layer_shapes()
        ]
        return cls(
            layers[:n_trunk],
            layers[n_trunk:n_trunk + n_head],
            layers[n_trunk + n_head:],
        )

    def stacks(self):
        return (self.trunk, self.scale_head, self.shift_head)

    def arrays(self) -> list[np.ndarray]:
        """All arrays in canonical traversal order."""
        out = []
        for stack in self.stacks():
            for w, b in stack:
                out.append(w)
                out.append(b)
        return out

    @property
    def dtype(self):
        return self.trunk[0][0].dtype

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def astype(self, dtype) -> "MlpParameters":
        return MlpParameters(*[
            [[w.astype(dtype), b.astype(dtype)] for w, b in stack]
            for stack in self.stacks()
        ])

    def copy(self) -> "MlpParameters":
        return self.astype(self.dtype)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, flat: np.ndarray, config: MlpConfig, dtype=np.float32):
        if flat.size != config.n_parameters:
            raise ConfigError(
                f"parameter count mismatch: config wants "
                f"{config.n_parameters}, got {flat.size}"
            )
        params = cls.zeros(config, dtype=dtype)
        pos = 0
        for arr in params.arrays():
            arr[...] = flat[pos:pos + arr.size].reshape(arr.shape)
            pos += arr.size
        return params

    def matches(self, config: MlpConfig) -> bool:
        shapes = [a.shape for a in self.arrays()]
        want = []
        for out, inp in config.layer_shapes():
            want.append((out, inp))
            want.append((out,))
        return shapes == want


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for the training loop."""

    epochs: int = 50
    lr_max: float = 3e-5
    lr_min: float = 1e-5
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (0 < self.lr_min <= self.lr_max):
            raise ConfigError(
                f"need 0 < lr_min <= lr_max, got {self.lr_min}, {self.lr_max}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay != 0.0:
            raise ConfigError("weight decay is fixed at 0 for this optimizer")


class AdamState:
    """Step counter and first/second moment accumulators."""

    __slots__ = ("t", "m", "v")

    def __init__(self, t: int, m: list[np.ndarray], v: list[np.ndarray]):
        self.t = t
        self.m = m
        self.v = v

    @classmethod
    def zeros_like(cls, params: MlpParameters) -> "AdamState":
        return cls(
            0,
            [np.zeros_like(a) for a in params.arrays()],
            [np.zeros_like(a) for a in params.arrays()],
        )


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, 1.0, slope).astype(z.dtype)


def _stack_forward(x, stack, slope, name, cache):
    """Linear->LeakyReLU pairs with a bare final linear; caches inputs
    and pre-activations for the backward pass."""
    h = x
    last = len(stack) - 1
    for i, (w, b) in enumerate(stack):
        z = h @ w.T + b
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite activation in {name} layer {i}")
        cache.append((name, i, h, z))
        h = _leaky(z, slope) if i < last else z
    return h


def _stack_backward(dh, stack, slope, cached, grads):
    """Backprop dh through one stack; returns gradient w.r.t. its input."""
    last = len(stack) - 1
    for i in range(last, -1, -1):
        _, _, x, z = cached[i]
        dz = dh if i == last else dh * _leaky_grad(z, slope)
        w, _ = stack[i]
        grads[i][0] += dz.T @ x
        grads[i][1] += dz.sum(axis=0)
        dh = dz @ w
    return dh


def forward_batch(x: np.ndarray, params: MlpParameters, config: MlpConfig):
    """Run a [B, input_dim] batch; returns (alpha[B], beta[B], cache)."""
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ConfigError(
            f"embedding batch must be [B, {config.input_dim}], got {x.shape}"
        )
    x = x.astype(params.dtype, copy=False)
    cache: dict = {"trunk": [], "scale": [], "shift": []}
    feat = _stack_forward(x, params.trunk, config.leaky_slope, "trunk",
                          cache["trunk"])
    raw_a = _stack_forward(feat, params.scale_head, config.leaky_slope,
                           "scale", cache["scale"])
    raw_b = _stack_forward(feat, params.shift_head, config.leaky_slope,
                           "shift", cache["shift"])
    alpha = np.exp(raw_a[:, 0])
    beta = np.exp(raw_b[:, 0])
    if not (np.isfinite(alpha).all() and np.isfinite(beta).all()):
        raise NumericError("non-finite activation in output exp")
    if (alpha <= 0).any() or (beta <= 0).any():
        raise NumericError("output exp underflowed to zero")
    cache["alpha"] = alpha
    cache["beta"] = beta
    return alpha, beta, cache


def backward_batch(dalpha: np.ndarray, dbeta: np.ndarray, cache,
                   params: MlpParameters, config: MlpConfig) -> MlpParameters:
    """Exact reverse-mode gradients given dloss/dalpha and dloss/dbeta."""
    grads = MlpParameters.zeros(config, dtype=params.dtype)
    slope = config.leaky_slope
    # d(exp(raw))/draw = exp(raw) = alpha (resp. beta)
    draw_a = (dalpha * cache["alpha"])[:, None].astype(params.dtype)
    draw_b = (dbeta * cache["beta"])[:, None].astype(params.dtype)
    dfeat = _stack_backward(draw_a, params.scale_head, slope,
                            cache["scale"], grads.scale_head)
    dfeat += _stack_backward(draw_b, params.shift_head, slope,
                             cache["shift"], grads.shift_head)
    _stack_backward(dfeat, params.trunk, slope, cache["trunk"], grads.trunk)
    return grads


def forward(e: TextEmbedding, params: MlpParameters,
            config: MlpConfig) -> ScaleShift:
    """Predict the alignment pair for one embedding."""
    if e.dim != config.input_dim:
        raise ConfigError(
            f"embedding dim {e.dim} != configured input dim {config.input_dim}"
        )
    alpha, beta, _ = forward_batch(e.values[None, :], params, config)
    return ScaleShift(float(alpha[0]), float(beta[0]))


def masked_l1_loss(yhat: DepthMap, gt: DepthMap, m: ValidityMask) -> float:
    """Mean absolute error over valid pixels: (1/|M|) sum_M |yhat - gt|."""
    require_same_shape(yhat, gt, m)
    total, n = kernels.masked_abs_sum(yhat.values, gt.values, m.bits)
    if n == 0:
        raise EmptyMaskError("masked L1 loss needs at least one valid pixel")
    return total / n


def loss_and_gradient(e: TextEmbedding, y: DepthMap, gt: DepthMap,
                      m: ValidityMask, params: MlpParameters,
                      config: MlpConfig):
    """Masked L1 loss of the aligned prediction and its exact gradient
    with respect to every parameter.

    The chain is loss(1 / (alpha * y + beta), gt) with
    (alpha, beta) = exp(mlp(e)); the per-pixel part runs through the
    kernel backend, the network part through backward_batch.
    """
    require_same_shape(y, gt, m)
    if m.count == 0:
        raise EmptyMaskError("loss needs at least one valid pixel")
    dtype = params.dtype
    alpha, beta, cache = forward_batch(e.values[None, :].astype(dtype),
                                       params, config)
    yv = y.values.astype(dtype, copy=False)
    gv = gt.values.astype(dtype, copy=False)
    loss, dalpha, dbeta, _ = kernels.alignment_loss_grad(
        yv, gv, m.bits, float(alpha[0]), float(beta[0])
    )
    grads = backward_batch(np.array([dalpha]), np.array([dbeta]), cache,
                           params, config)
    return loss, grads


def adam_step(params: MlpParameters, grads: MlpParameters, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One Adam update with bias correction and zero weight decay.

    Mutates params and state in place and returns them. A non-finite
    gradient refuses the step before touching anything.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    g_arrays = grads.arrays()
    for g in g_arrays:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient: step refused")
    state.t += 1
    for p, g, m, v in zip(params.arrays(), g_arrays, state.m, state.v):
        kernels.adam_update(p, g, m, v, lr, beta1, beta2, eps, state.t)
    return params, state


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    """lr(e) = lr_min + (lr_max - lr_min) * (1 + cos(pi * e / epochs)) / 2."""
    if not 0 <= epoch <= config.epochs:
        raise ConfigError(
            f"epoch {epoch} outside schedule [0, {config.epochs}]"
        )
    if config.epochs == 0:
        return config.lr_max
    span = config.lr_max - config.lr_min
    return config.lr_min + 0.5 * span * (
        1.0 + math.cos(math.pi * epoch / config.epochs)
    )


def predict(embeddings, params: MlpParameters, config: MlpConfig,
            aggregation: str = "first") -> ScaleShift:
    """Predict (alpha, beta) from one embedding or a set of them.

    aggregation: "first" uses only the first embedding; "mean" averages
    the predicted parameter pairs arithmetically.
    """
    if isinstance(embeddings, TextEmbedding):
        embeddings = [embeddings]
    embeddings = list(embeddings)
    if not embeddings:
        raise ConfigError("predict needs at least one embedding")
    if aggregation == "first":
        return forward(embeddings[0], params, config)
    if aggregation == "mean":
        pairs = [forward(e, params, config) for e in embeddings]
        return ScaleShift(
            sum(p.alpha for p in pairs) / len(pairs),
            sum(p.beta for p in pairs) / len(pairs),
        )
    raise ConfigError(f"unknown aggregation {aggregation!r}")
