"""Command-line surface: train / align / eval / synth.

Options resolve in order flag > environment (DEPTHALIGN_<NAME>) >
config file (KEY=VALUE lines) > built-in default, and the effective
configuration is echoed before the command runs, together with package
and numpy versions, the kernel backend, and SHA-256 hashes of the
inputs. Every command is deterministic for fixed inputs and seeds:
no timestamps or machine state leak into the artifacts.

Exit codes: 0 ok, 2 configuration, 3 file/format, 4 numeric.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .baselines import (
    GlobalFitConfig,
    apply_fit,
    global_fit,
    linear_fit_inverse,
    linear_fit_metric,
    lower_median,
    median_scale,
)
from .core import (
    DepthMap,
    DepthRange,
    ScaleShift,
    ValidityMask,
    clamp_to_range,
    invert,
    mask_from_ground_truth,
)
from .dataio.checkpoint import load_checkpoint, save_checkpoint
from .dataio.manifest import DatasetManifest
from .dataio.png16 import read_depth_png16, write_depth_png16
from .dataio.synthetic import SyntheticSpec, generate_synthetic_dataset
from .errors import ConfigError, DataError, DepthAlignError
from .head import MlpConfig, TextEmbedding, TrainConfig, predict
from .metrics import CSV_FIELDS, aggregate, evaluate
from .training import load_dataset, train

ENV_PREFIX = "DEPTHALIGN_"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _parse_config_file(path) -> dict[str, str]:
    """KEY=VALUE lines; blank lines and # comments ignored."""
    values = {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected KEY=VALUE, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


class RunConfig:
    """Resolves options from flags, environment, and config file, and
    records the effective values for the echo."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.file_values = (
            _parse_config_file(args.config) if args.config else {}
        )
        self.effective: dict[str, object] = {}

    def get(self, name: str, default, cast=str):
        key = name.replace("-", "_")
        value = self.args.get(key)
        if value is None:
            env = os.environ.get(ENV_PREFIX + key.upper())
            raw = env if env is not None else self.file_values.get(key)
            if raw is None:
                value = default
            else:
                try:
                    value = cast(raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(
                        f"bad value for {name!r}: {raw!r} ({exc})"
                    ) from exc
        self.effective[key] = value
        return value

    def echo(self, command: str, hashes: dict[str, str]) -> None:
        print(f"# depthalign {__version__} | numpy {np.__version__} "
              f"| kernels {kernels.BACKEND}")
        pairs = " ".join(f"{k}={v}" for k, v in sorted(self.effective.items())
                         if v is not None)
        print(f"# {command}: {pairs}")
        for name, digest in sorted(hashes.items()):
            print(f"# sha256 {name}={digest}")


def _bool_flag(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    return str(raw).lower() in ("1", "true", "yes", "on")


def _float_list(raw) -> tuple[float, ...]:
    if isinstance(raw, tuple):
        return raw
    return tuple(float(v) for v in str(raw).split(","))


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    rc = RunConfig(args)
    out_dir = rc.get("out", None)
    if not out_dir:
        raise ConfigError("synth requires --out")
    spec = SyntheticSpec(
        n_categories=rc.get("categories", 3, int),
        samples_per_category=rc.get("samples-per-category", 200, int),
        height=rc.get("height", 32, int),
        width=rc.get("width", 32, int),
        alphas=rc.get("alphas", None, _float_list),
        betas=rc.get("betas", None, _float_list),
        embedding_dim=rc.get("dim", 1024, int),
        embedding_scale=rc.get("embedding-scale", 4.0, float),
        noise_sigma=rc.get("sigma", 0.05, float),
        embeddings_per_sample=rc.get("embeddings-per-sample", 3, int),
        seed=rc.get("seed", 0, int),
        train_fraction=rc.get("train-fraction", 0.8, float),
        gt_divisor=rc.get("gt-divisor", 1000.0, float),
        name=rc.get("name", "synthetic"),
    )
    rc.echo("synth", {})
    all_path, train_path, test_path = generate_synthetic_dataset(spec, out_dir)
    n = spec.n_categories * spec.samples_per_category
    print(f"wrote {n} samples under {out_dir}")
    print(f"manifest={all_path}")
    print(f"train={train_path}")
    if test_path is not None:
        print(f"test={test_path}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    rc = RunConfig(args)
    manifest_path = rc.get("manifest", None)
    out_path = rc.get("out", None)
    if not manifest_path or not out_path:
        raise ConfigError("train requires --manifest and --out")
    if not Path(manifest_path).exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    cfg = TrainConfig(
        epochs=rc.get("epochs", 50, int),
        lr_max=rc.get("lr-max", 3e-5, float),
        lr_min=rc.get("lr-min", 1e-5, float),
        batch_size=rc.get("batch", 8, int),
        seed=rc.get("seed", 0, int),
    )
    mlp_config = MlpConfig(input_dim=rc.get("dim", 1024, int))
    loss_curve = rc.get("loss-curve", None)
    quiet = rc.get("quiet", False, _bool_flag)
    rc.echo("train", {"manifest": _sha256(manifest_path)})

    manifest = DatasetManifest.load(manifest_path)
    base_dir = Path(manifest_path).parent
    progress = None if quiet else (
        lambda record: print(json.dumps(record), flush=True)
    )
    params, history = train(manifest, cfg, mlp_config=mlp_config,
                            base_dir=base_dir, progress=progress)
    save_checkpoint(out_path, params, mlp_config, seed=cfg.seed,
                    epochs_completed=cfg.epochs)
    curve_path = (Path(loss_curve) if loss_curve
                  else Path(out_path).with_suffix(".loss.csv"))
    with open(curve_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "lr", "mean_loss"])
        for record in history:
            writer.writerow([record["epoch"], record["lr"],
                             record["mean_loss"]])
    print(f"checkpoint={out_path}")
    print(f"loss_curve={curve_path}")
    return 0


# ---------------------------------------------------------------------------
# align


def _align_with_pair(samples, pair_for_sample):
    """Apply a per-sample (alpha, beta) pair; returns outputs and log rows."""
    rows = [("image_id", "alpha", "beta")]
    outputs = []
    for s in samples:
        pair = pair_for_sample(s)
        aligned = kernels.apply_alignment(s.rel_inv, pair.alpha, pair.beta)
        rows.append((s.image_id, pair.alpha, pair.beta))
        outputs.append((s.image_id, DepthMap(aligned)))
    return outputs, rows


def _require_gt(sample, method):
    if sample.gt is None:
        raise DataError(
            f"--method {method} uses ground truth at alignment time but "
            f"sample {sample.image_id} has none"
        )


def _align_median(samples, eps):
    rows = [("image_id", "scale")]
    outputs = []
    for s in samples:
        _require_gt(s, "median")
        pred = median_scale(DepthMap(s.rel_inv), DepthMap(s.gt),
                            ValidityMask(s.mask), eps)
        d = invert(DepthMap(s.rel_inv), eps)
        scale = lower_median(s.gt[s.mask]) / lower_median(d.values[s.mask])
        rows.append((s.image_id, scale))
        outputs.append((s.image_id, pred))
    return outputs, rows


def _align_linear_fit(samples, eps, space):
    fit_fn = linear_fit_inverse if space == "inverse" else linear_fit_metric
    rows = [("image_id", "scale", "shift", "residual", "n_valid", "n_clamped")]
    outputs = []
    for s in samples:
        _require_gt(s, "linear-fit")
        fit = fit_fn(DepthMap(s.rel_inv), DepthMap(s.gt), ValidityMask(s.mask),
                     eps, image_id=s.image_id)
        pred, n_clamped = apply_fit(DepthMap(s.rel_inv), fit, eps)
        rows.append((s.image_id, fit.scale, fit.shift, fit.residual,
                     fit.n_valid, n_clamped))
        outputs.append((s.image_id, pred))
    return outputs, rows


def cmd_align(args) -> int:
    rc = RunConfig(args)
    method = rc.get("method", None)
    manifest_path = rc.get("manifest", None)
    out_dir = rc.get("out", None)
    if method not in ("rsa", "median", "linear-fit", "global", "fixed"):
        raise ConfigError(
            f"--method must be one of rsa|median|linear-fit|global|fixed, "
            f"got {method!r}"
        )
    if not manifest_path or not out_dir:
        raise ConfigError("align requires --manifest and --out")
    eps = rc.get("eps", 1e-6, float)
    hashes = {"manifest": _sha256(manifest_path)}
    manifest = DatasetManifest.load(manifest_path)
    base_dir = Path(manifest_path).parent
    divisor = rc.get("divisor", manifest.gt_divisor, float)

    ckpt_path = rc.get("checkpoint", None) if method == "rsa" else None
    aggregation = rc.get("aggregation", "first") if method == "rsa" else None
    if method == "rsa":
        if not ckpt_path:
            raise ConfigError("--method rsa requires --checkpoint")
        if not Path(ckpt_path).exists():
            raise DataError(f"checkpoint not found: {ckpt_path}")
        hashes["checkpoint"] = _sha256(ckpt_path)

    fit_manifest = alpha = beta = None
    if method == "global":
        fit_manifest = rc.get("fit-manifest", None)
        alpha = rc.get("alpha", None, float)
        beta = rc.get("beta", None, float)
        if fit_manifest:
            hashes["fit_manifest"] = _sha256(fit_manifest)
        elif alpha is None or beta is None:
            raise ConfigError(
                "--method global requires --fit-manifest (ground truth to "
                "fit on) or an already-fitted --alpha/--beta pair"
            )
    if method == "fixed":
        alpha = rc.get("alpha", None, float)
        beta = rc.get("beta", None, float)
        if alpha is None or beta is None:
            raise ConfigError("--method fixed requires --alpha and --beta")

    rc.echo("align", hashes)

    # gt files may be absent for the non-oracle methods; the oracle
    # methods report the missing requirement per sample below
    samples = load_dataset(manifest, base_dir, require_gt=False)

    if method == "rsa":
        params, mlp_config, _ = load_checkpoint(ckpt_path)

        def pair_for(s):
            embeddings = [TextEmbedding(e) for e in s.embeddings]
            return predict(embeddings, params, mlp_config,
                           aggregation=aggregation)

        outputs, rows = _align_with_pair(samples, pair_for)
    elif method == "fixed":
        pair = ScaleShift(alpha, beta)
        outputs, rows = _align_with_pair(samples, lambda s: pair)
    elif method == "global":
        if fit_manifest:
            fit_man = DatasetManifest.load(fit_manifest)
            fit_samples = load_dataset(fit_man, Path(fit_manifest).parent)
            triples = [
                (DepthMap(s.rel_inv), DepthMap(s.gt), ValidityMask(s.mask))
                for s in fit_samples
            ]
            pair = global_fit(triples, GlobalFitConfig(
                steps=rc.get("fit-steps", 1000, int),
                lr=rc.get("fit-lr", 0.1, float),
            ))
            print(f"# fitted alpha={pair.alpha!r} beta={pair.beta!r}")
        else:
            pair = ScaleShift(alpha, beta)
        outputs, rows = _align_with_pair(samples, lambda s: pair)
    elif method == "median":
        outputs, rows = _align_median(samples, eps)
    else:  # linear-fit
        space = rc.get("fit-space", "inverse")
        if space not in ("inverse", "metric"):
            raise ConfigError(
                f"--fit-space must be inverse|metric, got {space!r}"
            )
        outputs, rows = _align_linear_fit(samples, eps, space)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for image_id, depth in outputs:
        write_depth_png16(out / f"{image_id}.png", depth, scale_divisor=divisor)
    with open(out / "params.csv", "w", newline="") as f:
        csv.writer(f).writerows(rows)
    print(f"wrote {len(outputs)} aligned maps to {out_dir} (divisor {divisor})")
    return 0


# ---------------------------------------------------------------------------
# eval


def _parse_range(raw) -> DepthRange:
    if isinstance(raw, DepthRange):
        return raw
    parts = str(raw).split(",")
    if len(parts) != 2:
        raise ConfigError(f"--range must be MIN,MAX got {raw!r}")
    return DepthRange(float(parts[0]), float(parts[1]))


def _parse_crop(raw):
    if raw is None or isinstance(raw, tuple):
        return raw
    parts = str(raw).split(",")
    if len(parts) != 4:
        raise ConfigError(f"--crop must be ROW0,ROW1,COL0,COL1 got {raw!r}")
    return tuple(int(v) for v in parts)


def cmd_eval(args) -> int:
    rc = RunConfig(args)
    pred_dir = rc.get("pred-dir", None)
    gt_dir = rc.get("gt-dir", None)
    if not pred_dir or not gt_dir:
        raise ConfigError("eval requires --pred-dir and --gt-dir")
    depth_range = rc.get("range", DepthRange(1e-3, 10.0), _parse_range)
    agg_mode = rc.get("agg", "image-mean")
    crop = rc.get("crop", None, _parse_crop)
    pred_divisor = rc.get("pred-divisor", 256.0, float)
    gt_divisor = rc.get("gt-divisor", 256.0, float)
    out_csv = rc.get("out", None)
    rc.echo("eval", {})

    pred_files = {p.stem: p for p in sorted(Path(pred_dir).glob("*.png"))}
    gt_files = {p.stem: p for p in sorted(Path(gt_dir).glob("*.png"))}
    if not pred_files:
        raise DataError(f"no .png predictions found in {pred_dir}")
    gt_only = sorted(set(gt_files) - set(pred_files))
    if len(gt_only) == len(gt_files):
        raise DataError(
            f"no prediction matches any ground-truth id; predictions "
            f"{sorted(pred_files)}, ground truth {gt_only}"
        )
    missing_gt = sorted(set(pred_files) - set(gt_files))
    if missing_gt:
        raise DataError(f"predictions without ground truth: {missing_gt}")
    if gt_only:
        # a gt superset is the normal held-out workflow; note and move on
        print(f"# {len(gt_only)} ground-truth files without predictions "
              f"ignored: {gt_only}")

    rows = []
    reports = []
    for image_id in sorted(pred_files):
        pred, _ = read_depth_png16(pred_files[image_id], pred_divisor)
        gt, _ = read_depth_png16(gt_files[image_id], gt_divisor)
        mask = mask_from_ground_truth(gt, depth_range)
        pred = clamp_to_range(pred, depth_range)
        report = evaluate(pred, gt, mask, crop=crop)
        reports.append(report)
        rows.append([image_id] + report.csv_row())
    agg = aggregate(reports, mode=agg_mode)
    rows.append(["__aggregate__"] + agg.csv_row())

    header = ["image_id"] + list(CSV_FIELDS)
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"per-image metrics written to {out_csv}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    print(agg.to_kv_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthalign",
        description="Align relative (inverse) depth maps to metric scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="KEY=VALUE config file")
        p.add_argument("--seed", type=int, help="random seed (default 0)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--categories", type=int)
    p.add_argument("--samples-per-category", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--alphas", type=_float_list,
                   help="comma-separated per-category scale")
    p.add_argument("--betas", type=_float_list,
                   help="comma-separated per-category shift")
    p.add_argument("--dim", type=int, help="embedding dimension")
    p.add_argument("--embedding-scale", type=float)
    p.add_argument("--sigma", type=float, help="embedding noise sigma")
    p.add_argument("--embeddings-per-sample", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--gt-divisor", type=float)
    p.add_argument("--name")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the text-embedding head")
    add_common(p)
    p.add_argument("--manifest", help="training manifest (jsonl)")
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--dim", type=int, help="embedding dimension")
    p.add_argument("--lr-max", type=float)
    p.add_argument("--lr-min", type=float)
    p.add_argument("--loss-curve", help="loss curve CSV path")
    p.add_argument("--quiet", action="store_const", const=True,
                   help="suppress per-epoch progress records")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "align",
        help="write aligned metric depth maps",
        description="median and linear-fit are oracle methods: they read "
                    "the ground truth of the input manifest at alignment "
                    "time. global uses ground truth only on --fit-manifest; "
                    "rsa and fixed never touch ground truth.",
    )
    add_common(p)
    p.add_argument("--method",
                   choices=["rsa", "median", "linear-fit", "global", "fixed"])
    p.add_argument("--manifest", help="input manifest (jsonl)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoint", help="trained head checkpoint (rsa)")
    p.add_argument("--aggregation", choices=["first", "mean"],
                   help="multi-embedding handling for rsa (default first)")
    p.add_argument("--alpha", type=float, help="fixed/global scale")
    p.add_argument("--beta", type=float, help="fixed/global shift")
    p.add_argument("--fit-manifest",
                   help="manifest to fit the global pair on (uses its gt)")
    p.add_argument("--fit-steps", type=int)
    p.add_argument("--fit-lr", type=float)
    p.add_argument("--fit-space", choices=["inverse", "metric"],
                   help="linear-fit space (default inverse)")
    p.add_argument("--eps", type=float)
    p.add_argument("--divisor", type=float,
                   help="PNG16 divisor for outputs (default: manifest's)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    add_common(p)
    p.add_argument("--pred-dir")
    p.add_argument("--gt-dir")
    p.add_argument("--range", type=_parse_range,
                   help="evaluation depth range MIN,MAX in meters")
    p.add_argument("--agg", choices=["image-mean", "pixel-mean"])
    p.add_argument("--crop", type=_parse_crop,
                   help="ROW0,ROW1,COL0,COL1 rectangle to keep")
    p.add_argument("--pred-divisor", type=float)
    p.add_argument("--gt-divisor", type=float)
    p.add_argument("--out", help="per-image CSV output path")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DepthAlignError as exc:
        category = {2: "config", 3: "io", 4: "numeric"}.get(exc.exit_code, "error")
        print(f"error ({category}): {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
