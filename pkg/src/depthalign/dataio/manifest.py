"""Dataset manifests binding sample ids to their on-disk artifacts.

A manifest is a JSON Lines file: the first line is a header record
{"manifest": 1, "name", "depth_range", "gt_divisor"} and every
following line is one sample record {"image_id", "rel_depth",
"gt_depth", "embeddings": [{"path", "index"}], "captions"}. Paths are
stored relative to the manifest file. Line order is the dataset
iteration order; training determinism depends on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..core import DepthRange, mask_from_ground_truth
from ..errors import ConfigError, DataError
from ..head import TextEmbedding
from .pfm import read_pfm
from .png16 import read_depth_png16
from .store import read_embedding_store

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SampleRecord:
    """One image: relative-depth file, ground-truth file, embeddings."""

    image_id: str
    rel_depth_path: str
    gt_depth_path: str
    embedding_refs: tuple[tuple[str, int], ...]
    captions: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "embedding_refs",
                           tuple((str(p), int(i)) for p, i in self.embedding_refs))
        object.__setattr__(self, "captions", tuple(self.captions))
        if not self.image_id:
            raise ConfigError("image_id must be nonempty")
        if not self.rel_depth_path or not self.gt_depth_path:
            raise ConfigError(f"sample {self.image_id}: empty depth path")
        if not self.embedding_refs:
            raise ConfigError(
                f"sample {self.image_id}: needs at least one embedding ref"
            )
        for path, index in self.embedding_refs:
            if not path or index < 0:
                raise ConfigError(
                    f"sample {self.image_id}: bad embedding ref ({path!r}, {index})"
                )


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered sample records plus the dataset evaluation range."""

    name: str
    depth_range: DepthRange
    records: tuple[SampleRecord, ...]
    gt_divisor: float = 256.0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate image ids in manifest: {dupes}")
        if self.gt_divisor <= 0:
            raise ConfigError(f"gt_divisor must be > 0, got {self.gt_divisor}")

    def __len__(self):
        return len(self.records)

    def save(self, path) -> None:
        path = Path(path)
        lines = [json.dumps({
            "manifest": FORMAT_VERSION,
            "name": self.name,
            "depth_range": {"min_m": self.depth_range.min_m,
                            "max_m": self.depth_range.max_m},
            "gt_divisor": self.gt_divisor,
        })]
        for r in self.records:
            lines.append(json.dumps({
                "image_id": r.image_id,
                "rel_depth": r.rel_depth_path,
                "gt_depth": r.gt_depth_path,
                "embeddings": [{"path": p, "index": i}
                               for p, i in r.embedding_refs],
                "captions": list(r.captions),
            }))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise DataError(f"{path}: empty manifest")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:1: malformed header ({exc})") from exc
        if not isinstance(header, dict) or header.get("manifest") != FORMAT_VERSION:
            raise DataError(
                f"{path}:1: missing or unsupported manifest header"
            )
        try:
            rng = header["depth_range"]
            depth_range = DepthRange(float(rng["min_m"]), float(rng["max_m"]))
            name = str(header.get("name", path.stem))
            gt_divisor = float(header.get("gt_divisor", 256.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:1: bad header field ({exc})") from exc
        records = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                refs = tuple(
                    (e["path"], int(e["index"])) for e in obj["embeddings"]
                )
                records.append(SampleRecord(
                    image_id=str(obj["image_id"]),
                    rel_depth_path=str(obj["rel_depth"]),
                    gt_depth_path=str(obj["gt_depth"]),
                    embedding_refs=refs,
                    captions=tuple(obj.get("captions", ())),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from exc
        try:
            return cls(name=name, depth_range=depth_range,
                       records=tuple(records), gt_divisor=gt_divisor)
        except ConfigError as exc:
            raise DataError(f"{path}: {exc}") from exc


def load_sample(record: SampleRecord, base_dir, manifest: DatasetManifest,
                store_cache: dict | None = None, require_gt: bool = True):
    """Load one record's artifacts from disk.

    Returns (rel_inv_depth: DepthMap, gt: DepthMap, mask: ValidityMask,
    embeddings: list[TextEmbedding]). The mask combines the ground-truth
    validity convention (> 0) with the manifest's depth range. When
    require_gt is False a missing ground-truth file yields gt = mask =
    None instead of an error.
    """
    base = Path(base_dir)
    try:
        rel = read_pfm(base / record.rel_depth_path)
    except (DataError, OSError) as exc:
        raise DataError(f"sample {record.image_id}: {exc}") from exc
    gt_path = base / record.gt_depth_path
    if not require_gt and not gt_path.exists():
        gt, mask = None, None
    else:
        try:
            gt, _ = read_depth_png16(gt_path,
                                     scale_divisor=manifest.gt_divisor)
        except (DataError, OSError) as exc:
            raise DataError(f"sample {record.image_id}: {exc}") from exc
        mask = mask_from_ground_truth(gt, manifest.depth_range)
    embeddings = []
    for store_path, index in record.embedding_refs:
        full = base / store_path
        key = str(full)
        if store_cache is not None and key in store_cache:
            matrix = store_cache[key]
        else:
            try:
                matrix = read_embedding_store(full)
            except (DataError, OSError) as exc:
                raise DataError(f"sample {record.image_id}: {exc}") from exc
            if store_cache is not None:
                store_cache[key] = matrix
        if index >= matrix.shape[0]:
            raise DataError(
                f"sample {record.image_id}: embedding index {index} out of "
                f"range for store {store_path} with {matrix.shape[0]} rows"
            )
        embeddings.append(TextEmbedding(matrix[index]))
    return rel, gt, mask, embeddings
