"""Synthetic dataset generator for desk-scale experiments.

Each sample belongs to a category c with fixed positive (alpha_c,
beta_c). The relative inverse depth y is a smooth random field in
[0, 1] and the ground truth is generated exactly from the model family,
gt = 1 / (alpha_c * y + beta_c), so a head that maps the sample's
embedding to (alpha_c, beta_c) attains (near) zero loss. Embeddings are
category-coded: a scaled one-hot basis direction plus Gaussian noise.
Everything is a deterministic function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import DepthMap, DepthRange
from ..errors import ConfigError
from .captions import InstanceList, render_structured_caption
from .manifest import DatasetManifest, SampleRecord
from .pfm import write_pfm
from .png16 import write_depth_png16
from .store import write_embedding_store

def _default_pairs(n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-category (alpha, beta) defaults: geometric spread of scales
    with shift proportional to scale, so larger-scale categories are
    nearer scenes with nearer far planes (beta = far-plane inverse)."""
    alphas = tuple(0.7 * (2.0 ** c) for c in range(n))
    betas = tuple(0.35 * a for a in alphas)
    return alphas, betas


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings; alphas/betas default to a geometric spread."""

    n_categories: int = 3
    samples_per_category: int = 200
    height: int = 32
    width: int = 32
    alphas: tuple[float, ...] | None = None
    betas: tuple[float, ...] | None = None
    embedding_dim: int = 1024
    embedding_scale: float = 4.0
    noise_sigma: float = 0.05
    embeddings_per_sample: int = 3
    seed: int = 0
    train_fraction: float = 0.8
    gt_divisor: float = 1000.0
    name: str = "synthetic"

    def __post_init__(self):
        if self.n_categories < 1 or self.samples_per_category < 1:
            raise ConfigError("need at least one category and one sample")
        if self.height < 2 or self.width < 2:
            raise ConfigError("images must be at least 2x2")
        if self.alphas is None or self.betas is None:
            alphas, betas = _default_pairs(self.n_categories)
            object.__setattr__(self, "alphas",
                               alphas if self.alphas is None else tuple(self.alphas))
            object.__setattr__(self, "betas",
                               betas if self.betas is None else tuple(self.betas))
        else:
            object.__setattr__(self, "alphas", tuple(self.alphas))
            object.__setattr__(self, "betas", tuple(self.betas))
        if len(self.alphas) != self.n_categories or len(self.betas) != self.n_categories:
            raise ConfigError(
                "alphas and betas must have one entry per category"
            )
        if any(a <= 0 for a in self.alphas) or any(b <= 0 for b in self.betas):
            raise ConfigError("per-category scale and shift must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        if self.embedding_dim < self.n_categories:
            raise ConfigError("embedding dim must cover one axis per category")
        if self.embeddings_per_sample < 1:
            raise ConfigError("need at least one embedding per sample")
        if not (0 < self.train_fraction <= 1):
            raise ConfigError(
                f"train fraction must be in (0, 1], got {self.train_fraction}"
            )


def _smooth_field(rng: np.random.Generator, height: int, width: int,
                  coarse: int = 5) -> np.ndarray:
    """Bilinear upsampling of a coarse uniform grid: smooth values in [0, 1]."""
    grid = rng.uniform(0.0, 1.0, size=(coarse, coarse))
    rows = np.linspace(0, coarse - 1, height)
    cols = np.linspace(0, coarse - 1, width)
    r0 = np.clip(np.floor(rows).astype(int), 0, coarse - 2)
    c0 = np.clip(np.floor(cols).astype(int), 0, coarse - 2)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    g00 = grid[np.ix_(r0, c0)]
    g01 = grid[np.ix_(r0, c0 + 1)]
    g10 = grid[np.ix_(r0 + 1, c0)]
    g11 = grid[np.ix_(r0 + 1, c0 + 1)]
    top = g00 * (1 - fc) + g01 * fc
    bottom = g10 * (1 - fc) + g11 * fc
    return (top * (1 - fr) + bottom * fr).astype(np.float32)


def _category_embedding(rng, spec: SyntheticSpec, category: int) -> np.ndarray:
    e = rng.standard_normal(spec.embedding_dim) * spec.noise_sigma
    e[category] += spec.embedding_scale
    return e.astype(np.float32)


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir):
    """Write the dataset under out_dir.

    Produces rel/<id>.pfm, gt/<id>.png, emb/<id>.rsae plus three
    manifests: manifest.jsonl (all samples), train.jsonl and test.jsonl
    (per-category split by spec.train_fraction). Returns the three
    manifest paths in that order.
    """
    out = Path(out_dir)
    for sub in ("rel", "gt", "emb"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    max_depth = 1.0 / min(spec.betas)
    depth_range = DepthRange(1e-3, float(np.ceil(max_depth * 1.1)))

    records = []
    is_test = []
    test_every = None
    if spec.train_fraction < 1:
        test_every = max(2, round(1.0 / (1.0 - spec.train_fraction)))
    for idx in range(spec.samples_per_category):
        for cat in range(spec.n_categories):
            image_id = f"c{cat}_s{idx:04d}"
            y = _smooth_field(rng, spec.height, spec.width)
            gt = 1.0 / (spec.alphas[cat] * y + spec.betas[cat])
            rel_path = f"rel/{image_id}.pfm"
            gt_path = f"gt/{image_id}.png"
            emb_path = f"emb/{image_id}.rsae"
            write_pfm(out / rel_path, DepthMap(y))
            write_depth_png16(out / gt_path, DepthMap(gt.astype(np.float32)),
                              scale_divisor=spec.gt_divisor)
            matrix = np.stack([
                _category_embedding(rng, spec, cat)
                for _ in range(spec.embeddings_per_sample)
            ])
            write_embedding_store(out / emb_path, matrix)
            instances = InstanceList(((f"class{cat}", 1 + idx % 3),))
            records.append(SampleRecord(
                image_id=image_id,
                rel_depth_path=rel_path,
                gt_depth_path=gt_path,
                embedding_refs=tuple(
                    (emb_path, i) for i in range(spec.embeddings_per_sample)
                ),
                captions=(render_structured_caption(instances),),
            ))
            is_test.append(
                test_every is not None and idx % test_every == test_every - 1
            )

    def manifest_for(selected, suffix):
        return DatasetManifest(
            name=f"{spec.name}-{suffix}" if suffix else spec.name,
            depth_range=depth_range,
            records=tuple(r for r, keep in zip(records, selected) if keep),
            gt_divisor=spec.gt_divisor,
        )

    all_path = out / "manifest.jsonl"
    train_path = out / "train.jsonl"
    test_path = out / "test.jsonl"
    manifest_for([True] * len(records), "").save(all_path)
    manifest_for([not t for t in is_test], "train").save(train_path)
    if any(is_test):
        manifest_for(is_test, "test").save(test_path)
    else:
        test_path = None
    return all_path, train_path, test_path
