"""Training loop for the embedding head and dataset-level evaluation.

The loop is single-threaded and bitwise deterministic for a fixed seed:
one RNG seeded from the config drives the per-epoch sample order and
the per-iteration caption choice, batches average per-sample gradients,
the learning rate follows the per-epoch cosine schedule. Samples are
loaded into memory once up front; I/O failures name the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .core import DepthMap, ScaleShift, ValidityMask, clamp_to_range
from .errors import ConfigError, DataError, NumericError
from .head import (
    AdamState,
    MlpConfig,
    MlpParameters,
    TextEmbedding,
    TrainConfig,
    adam_step,
    backward_batch,
    cosine_lr,
    forward_batch,
    predict,
)
from .dataio.manifest import DatasetManifest, load_sample
from .metrics import MetricReport, aggregate, evaluate


@dataclass
class LoadedSample:
    """One sample resident in memory: arrays only, ready for the kernels."""

    image_id: str
    rel_inv: np.ndarray             # float32 (H, W)
    gt: np.ndarray | None           # float32 (H, W)
    mask: np.ndarray | None         # bool (H, W)
    embeddings: np.ndarray          # float32 (k, dim)


def load_dataset(manifest: DatasetManifest, base_dir,
                 require_gt: bool = True) -> list[LoadedSample]:
    """Materialize every record of the manifest; embedding stores are
    read once each."""
    store_cache: dict = {}
    samples = []
    for record in manifest.records:
        rel, gt, mask, embeddings = load_sample(
            record, base_dir, manifest, store_cache=store_cache,
            require_gt=require_gt,
        )
        if not embeddings:
            raise DataError(f"sample {record.image_id}: no embeddings")
        samples.append(LoadedSample(
            image_id=record.image_id,
            rel_inv=rel.values,
            gt=None if gt is None else gt.values,
            mask=None if mask is None else mask.bits,
            embeddings=np.stack([e.values for e in embeddings]),
        ))
    if not samples:
        raise ConfigError("manifest has no samples")
    return samples


def sample_caption(record, rng: np.random.Generator) -> int:
    """Uniform caption/embedding index for one training iteration."""
    if hasattr(record, "embedding_refs"):
        n = len(record.embedding_refs)
    else:
        n = record.embeddings.shape[0]
    if n < 1:
        raise ConfigError("sample has no captions to choose from")
    return int(rng.integers(0, n))


def train(manifest: DatasetManifest, cfg: TrainConfig,
          mlp_config: MlpConfig | None = None, base_dir=None,
          progress=None, initial_params: MlpParameters | None = None):
    """Train the head on the manifest's samples.

    Returns (MlpParameters, history) where history holds one
    {"epoch", "lr", "mean_loss"} record per epoch. progress, when
    given, is called with each record as it completes. initial_params,
    when given (e.g. from a checkpoint), replaces the seeded
    initialization; the optimizer state still starts fresh.
    """
    if mlp_config is None:
        mlp_config = MlpConfig()
    base = Path(base_dir) if base_dir is not None else Path(".")
    samples = load_dataset(manifest, base)
    dim = samples[0].embeddings.shape[1]
    if dim != mlp_config.input_dim:
        raise ConfigError(
            f"embeddings have dim {dim}, model expects {mlp_config.input_dim}"
        )

    if initial_params is not None:
        if not initial_params.matches(mlp_config):
            raise ConfigError("initial parameters do not match the config")
        params = initial_params.copy()
    else:
        params = MlpParameters.init(mlp_config, cfg.seed)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(samples)
    history = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(n)
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            batch = [samples[i] for i in chunk]
            picks = [sample_caption(s, rng) for s in batch]
            x = np.stack([s.embeddings[k] for s, k in zip(batch, picks)])
            loss = _batch_step(x, batch, params, state, mlp_config, cfg, lr)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {n_batches}"
                )
            loss_sum += loss
            n_batches += 1
        record = {"epoch": epoch, "lr": lr, "mean_loss": loss_sum / n_batches}
        history.append(record)
        if progress is not None:
            progress(record)
    return params, history


def _batch_step(x, batch, params, state, mlp_config, cfg, lr):
    """Forward, per-sample pixel loss/gradients, backward, Adam update.

    The batch loss is the mean of the per-sample masked-L1 losses, so
    each sample's (dalpha, dbeta) is scaled by 1/B before backprop.
    """
    alpha, beta, cache = forward_batch(x, params, mlp_config)
    b = len(batch)
    dalpha = np.zeros(b)
    dbeta = np.zeros(b)
    loss_total = 0.0
    for i, s in enumerate(batch):
        if not s.mask.any():
            raise NumericError(f"sample {s.image_id} has no valid pixels")
        loss, da, db, _ = kernels.alignment_loss_grad(
            s.rel_inv, s.gt, s.mask, float(alpha[i]), float(beta[i])
        )
        loss_total += loss
        dalpha[i] = da / b
        dbeta[i] = db / b
    grads = backward_batch(dalpha, dbeta, cache, params, mlp_config)
    adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return loss_total / b


@dataclass
class DatasetEvaluation:
    """Per-image reports and predicted pairs plus the aggregate report."""

    aggregate: MetricReport
    per_image: list[tuple[str, MetricReport]]
    pairs: list[tuple[str, ScaleShift]]


def evaluate_on_dataset(manifest: DatasetManifest, params: MlpParameters,
                        mlp_config: MlpConfig, base_dir=None,
                        aggregation: str = "first",
                        agg_mode: str = "image-mean") -> DatasetEvaluation:
    """Predict (alpha, beta) per sample, align, clamp to the dataset's
    depth range, and evaluate against ground truth."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    samples = load_dataset(manifest, base)
    reports = []
    pairs = []
    for s in samples:
        embeddings = [TextEmbedding(e) for e in s.embeddings]
        pair = predict(embeddings, params, mlp_config, aggregation=aggregation)
        aligned = kernels.apply_alignment(s.rel_inv, pair.alpha, pair.beta)
        clamped = clamp_to_range(DepthMap(aligned), manifest.depth_range)
        report = evaluate(clamped, DepthMap(s.gt), ValidityMask(s.mask))
        reports.append((s.image_id, report))
        pairs.append((s.image_id, pair))
    agg = aggregate([r for _, r in reports], mode=agg_mode)
    return DatasetEvaluation(aggregate=agg, per_image=reports, pairs=pairs)
