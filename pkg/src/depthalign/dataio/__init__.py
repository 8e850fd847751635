"""File formats, manifests, captions, checkpoints and the synthetic
dataset generator."""

from .captions import InstanceList, caption_variants, render_structured_caption
from .checkpoint import load_checkpoint, save_checkpoint
from .manifest import DatasetManifest, SampleRecord, load_sample
from .pfm import read_pfm, write_pfm
from .png16 import (
    KITTI_DIVISOR,
    NYU_DIVISOR,
    read_depth_png16,
    write_depth_png16,
)
from .store import read_embedding_store, write_embedding_store
from .synthetic import SyntheticSpec, generate_synthetic_dataset

__all__ = [
    "InstanceList",
    "caption_variants",
    "render_structured_caption",
    "load_checkpoint",
    "save_checkpoint",
    "DatasetManifest",
    "SampleRecord",
    "load_sample",
    "read_pfm",
    "write_pfm",
    "KITTI_DIVISOR",
    "NYU_DIVISOR",
    "read_depth_png16",
    "write_depth_png16",
    "read_embedding_store",
    "write_embedding_store",
    "SyntheticSpec",
    "generate_synthetic_dataset",
]
