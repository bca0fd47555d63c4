"""Command-line interface: generate, evaluate, dump-schedule, validate-config.

Exit codes: 0 success, 2 config violation, 3 input/subject failure,
4 grid/shape mismatch, 1 anything else.  Generation output is a function
of (config, subjects, seed) alone: reruns and different --jobs settings
produce byte-identical trees.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .config import (config_from_dict, config_hash, default_config, load_config,
                     validate_config_dict)
from .errors import ConfigError, InputError, ShapeError, SynthvolError
from .generator import (batch_deformation, generate_batch, interpolate_corruption,
                        load_subject, severity_schedule)
from .metrics import MetricReport, dice, l1, ms_ssim, norm_l2, psnr, ssim
from .nifti import read_nifti, write_nifti

SEED_ENV = "SYNTHVOL_SEED"
_GZIP_LEVEL = 1  # fixed for speed; any fixed level keeps output deterministic


def _dump_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_bundle(directory: Path, bundle) -> list:
    """Write one SampleBundle as NIfTI files plus a provenance sidecar."""
    directory.mkdir(parents=True, exist_ok=True)
    grid = bundle.input.grid
    written = []

    def put(name, volume, **kw):
        path = directory / name
        write_nifti(path, grid, volume, compresslevel=_GZIP_LEVEL, **kw)
        written.append(name)

    put("input.nii.gz", bundle.input)
    put("seg.nii.gz", bundle.targets.seg)
    put("atlas_coords.nii.gz", bundle.targets.atlas_coords)
    put("bias.nii.gz", bundle.targets.bias_gt)
    for name, vol in sorted(bundle.targets.dist.items()):
        put(f"dist_{name}.nii.gz", vol)
    for name, vol in sorted(bundle.targets.modality_targets.items()):
        put(f"{name}.nii.gz", vol)
    _dump_json(directory / "provenance.json", bundle.provenance)
    written.append("provenance.json")
    return written


def _batch_dir(out: Path, subject_id: str, iteration: int) -> Path:
    return out / subject_id / f"iter_{iteration:04d}"


def _generate_one(payload: dict) -> dict:
    """Worker: generate and write one (subject, iteration) batch."""
    config = config_from_dict(payload["config"])
    subject = load_subject(payload["subject_dir"])
    bundles = generate_batch(subject, config, payload["iteration"],
                             threads=payload["threads"])
    batch_dir = _batch_dir(Path(payload["out"]), subject.id, payload["iteration"])
    files = []
    for index, bundle in enumerate(bundles):
        files.extend(f"sample_{index:02d}/{name}" for name in
                     write_bundle(batch_dir / f"sample_{index:02d}", bundle))
    if payload["save_deformation"]:
        phi = batch_deformation(subject, config, payload["iteration"])
        write_nifti(batch_dir / "deformation.nii.gz", phi.grid, phi.coords,
                    compresslevel=_GZIP_LEVEL)
        files.append("deformation.nii.gz")
    return {
        "subject": subject.id,
        "iteration": payload["iteration"],
        "path": str(_batch_dir(Path("."), subject.id, payload["iteration"])),
        "files": files,
    }


def _discover_subjects(subjects_dir: Path) -> list:
    if not subjects_dir.is_dir():
        raise InputError(f"{subjects_dir}: not a directory")
    dirs = sorted(p for p in subjects_dir.iterdir() if p.is_dir())
    if not dirs:
        raise InputError(f"{subjects_dir}: contains no subject directories")
    return dirs


def cmd_generate(args) -> int:
    iterations = args.iterations
    if args.from_manifest:
        with open(args.from_manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        config_doc = manifest["config"]
        if iterations is None:
            iterations = int(manifest["iterations"])
    elif args.config:
        config_doc = load_config(args.config).raw
    else:
        config_doc = default_config()
    if iterations is None:
        iterations = 1

    seed = args.seed if args.seed is not None else os.environ.get(SEED_ENV)
    if seed is not None:
        config_doc = dict(config_doc, master_seed=int(seed))
    config = config_from_dict(config_doc)

    subjects = _discover_subjects(Path(args.subjects_dir))
    for sub in subjects:  # fail fast on broken subjects before spawning work
        load_subject(sub)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        {"config": config.raw, "subject_dir": str(sub), "iteration": it,
         "out": str(out), "threads": args.threads,
         "save_deformation": args.save_deformation}
        for it in range(iterations)
        for sub in subjects
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs,
                                 mp_context=get_context("spawn")) as pool:
            entries = list(pool.map(_generate_one, tasks))
    else:
        entries = [_generate_one(t) for t in tasks]

    manifest = {
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "master_seed": config.master_seed,
        "config": config.raw,
        "config_sha256": config_hash(config),
        "subjects": [p.name for p in subjects],
        "iterations": iterations,
        "batches": entries,
    }
    _dump_json(out / "manifest.json", manifest)
    print(f"wrote {len(entries)} batches to {out}")
    return 0


def _load_for_metrics(path, want_labels: bool):
    grid, vol, _ = read_nifti(path)
    labels = None
    if want_labels:
        _, labels, _ = read_nifti(path, as_labels=True)
    return grid, vol, labels


def cmd_evaluate(args) -> int:
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"l1", "psnr", "ssim", "ms_ssim", "dice", "norm_l2"}
    unknown = [m for m in names if m not in known]
    if unknown:
        raise ConfigError(f"metrics: unknown metric(s) {unknown}; choose from {sorted(known)}")

    want_labels = "dice" in names
    pred_grid, pred, pred_labels = _load_for_metrics(args.pred, want_labels)
    truth_grid, truth, truth_labels = _load_for_metrics(args.truth, want_labels)
    if not pred_grid.approx_equal(truth_grid, tol=1e-4):
        raise ShapeError(f"{args.pred} and {args.truth} are on different grids")

    mask = None
    if args.mask:
        mask_grid, mask_vol, _ = read_nifti(args.mask)
        if not mask_grid.approx_equal(pred_grid, tol=1e-4):
            raise ShapeError(f"{args.mask} grid does not match {args.pred}")
        mask = mask_vol.scalars > 0

    values = {}
    dice_table = None
    for name in names:
        if name == "l1":
            values["l1"] = l1(pred, truth, mask)
        elif name == "psnr":
            values["psnr"] = psnr(pred, truth, peak=args.peak)
        elif name == "ssim":
            values["ssim"] = ssim(pred, truth, peak=args.peak)
        elif name == "ms_ssim":
            values["ms_ssim"] = ms_ssim(pred, truth, peak=args.peak)
        elif name == "norm_l2":
            values["norm_l2"] = norm_l2(pred, truth, mask)
        elif name == "dice":
            result = dice(pred_labels, truth_labels)
            values["dice"] = result.mean
            dice_table = result.per_label

    report = MetricReport(
        values=values, dice_per_label=dice_table,
        metadata={"pred": str(args.pred), "truth": str(args.truth),
                  "mask": str(args.mask) if args.mask else None,
                  "peak": args.peak, "grid_dims": list(pred_grid.dims)},
    )
    print(report.to_text())
    if args.out:
        _dump_json(Path(args.out), report.to_dict())
    return 0


def cmd_dump_schedule(args) -> int:
    config = load_config(args.config) if args.config else config_from_dict({})
    n = args.batch_size if args.batch_size else config.batch_size
    rows = []
    for index, severity in enumerate(severity_schedule(n)):
        params = interpolate_corruption(config.mild, config.severe, severity)
        rows.append({"index": index, "severity": severity, **params.to_dict()})
    if args.json:
        print(json.dumps({"batch_size": n, "schedule": rows}, indent=2))
        return 0
    cols = ["index", "severity", "noise_sigma", "bias_amplitude",
            "bias_control_spacing", "gamma_log_std", "mixup_lambda", "slice_spacing"]
    print("  ".join(f"{c:>20}" for c in cols))
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>20}" if isinstance(v, int)
                         else f"{str(v):>20}" if isinstance(v, list)
                         else f"{v:>20.6g}")
        print("  ".join(cells))
    return 0


def cmd_validate_config(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
    validate_config_dict(doc)
    print(f"{args.config}: ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthvol",
        description="Synthetic brain-volume generation, supervision targets, and metrics.",
    )
    parser.add_argument("--version", action="version", version=f"synthvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate sample bundles from label maps")
    gen.add_argument("--config", help="JSON config file (defaults used when omitted)")
    gen.add_argument("--from-manifest", help="reuse the config embedded in a manifest")
    gen.add_argument("--subjects-dir", required=True,
                     help="directory of per-subject directories (labels.nii.gz + modalities)")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--iterations", type=int, default=None,
                     help="batches per subject (default 1, or the manifest value)")
    gen.add_argument("--seed", type=int, default=None,
                     help=f"master seed override (beats {SEED_ENV} and the config)")
    gen.add_argument("--jobs", type=int, default=1, help="parallel batch processes")
    gen.add_argument("--threads", type=int, default=1, help="threads within one batch")
    gen.add_argument("--save-deformation", action="store_true",
                     help="also write the per-batch deformation field")
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="score a prediction against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--metrics", default="l1,psnr,ssim",
                    help="comma-separated subset of l1,psnr,ssim,ms_ssim,dice,norm_l2")
    ev.add_argument("--mask", default=None, help="NIfTI mask (nonzero = evaluate)")
    ev.add_argument("--peak", type=float, default=1.0, help="PSNR/SSIM dynamic range")
    ev.add_argument("--out", default=None, help="write the report as JSON here")
    ev.set_defaults(func=cmd_evaluate)

    dump = sub.add_parser("dump-schedule", help="print the severity-interpolated corruption table")
    dump.add_argument("--config", default=None)
    dump.add_argument("--batch-size", "-N", type=int, default=None)
    dump.add_argument("--json", action="store_true")
    dump.set_defaults(func=cmd_dump_schedule)

    val = sub.add_parser("validate-config", help="check a config file against the schema")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return 4
    except SynthvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
