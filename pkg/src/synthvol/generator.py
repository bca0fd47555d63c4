"""Batch orchestration: one subject, one deformation, N graded samples.

Each iteration picks a subject, draws a single deformation and a single
patch location shared by the whole mini-batch, then produces ``batch_size``
samples whose corruption severity ramps linearly from the mild endpoint to
the severe endpoint.  Every random draw comes from a counter-based stream
keyed by (master_seed, subject, iteration, sample, stage), so output is a
pure function of (config, subject, iteration) - independent of thread
count, job count, and generation order.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numba
import numpy as np

from . import rng as rngmod
from .appearance import (CorruptionParams, add_noise, apply_bias, gamma_augment, mixup,
                         paint_contrast, sample_bias_field, simulate_resolution)
from .config import GenerationConfig
from .core import Volume, VoxelGrid
from .deform import DeformationField, compose, integrate_svf, sample_affine, sample_svf
from .errors import ConfigError, InputError
from .nifti import read_nifti
from .targets import MODALITIES, Subject, TargetSet, assemble_targets

STAGE_ORDER = ("deform", "patch", "contrast", "bias", "gamma", "resolution", "noise", "mixup")


@dataclass(frozen=True)
class SampleBundle:
    """One generated input volume plus its targets and full parameter record."""

    input: Volume
    targets: TargetSet
    severity: float
    provenance: dict


def severity_schedule(batch_size: int) -> list:
    """Severities in [0, 1]: evenly spaced for N >= 2, the midpoint for N = 1."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size == 1:
        return [0.5]
    return [i / (batch_size - 1) for i in range(batch_size)]


def interpolate_corruption(mild: CorruptionParams, severe: CorruptionParams,
                           severity: float) -> CorruptionParams:
    """Fieldwise linear interpolation between the two endpoints."""

    def lerp(lo, hi):
        return lo + (hi - lo) * severity

    return CorruptionParams(
        bias_amplitude=lerp(mild.bias_amplitude, severe.bias_amplitude),
        bias_control_spacing=lerp(mild.bias_control_spacing, severe.bias_control_spacing),
        noise_sigma=lerp(mild.noise_sigma, severe.noise_sigma),
        slice_spacing=tuple(lerp(lo, hi) for lo, hi in
                            zip(mild.slice_spacing, severe.slice_spacing)),
        gamma_log_std=lerp(mild.gamma_log_std, severe.gamma_log_std),
        mixup_lambda=lerp(mild.mixup_lambda, severe.mixup_lambda),
    )


def _normalize_real(data: np.ndarray) -> np.ndarray:
    lo = float(data.min())
    hi = float(data.max())
    if hi <= lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


def load_subject(directory) -> Subject:
    """Read labels.nii[.gz] plus any of t1w/t2w/flair/ct from a subject directory.

    Real modalities are min-max normalized to [0, 1] and must share the
    label grid.  An optional atlas.json holds a 4x4 subject-to-atlas matrix.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")

    def find(stem):
        for suffix in (".nii.gz", ".nii"):
            candidate = directory / f"{stem}{suffix}"
            if candidate.exists():
                return candidate
        return None

    labels_path = find("labels")
    if labels_path is None:
        raise InputError(f"{directory}: missing labels.nii.gz")
    _, labels, _ = read_nifti(labels_path, as_labels=True)

    reals = {}
    for name in MODALITIES:
        path = find(name)
        if path is None:
            continue
        grid, vol, _ = read_nifti(path)
        if not grid.approx_equal(labels.grid, tol=1e-4):
            raise InputError(f"{path}: grid does not match {labels_path}")
        reals[name] = Volume(grid, _normalize_real(vol.data.astype(np.float64)))

    atlas = None
    atlas_path = directory / "atlas.json"
    if atlas_path.exists():
        import json

        with open(atlas_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        atlas = np.asarray(doc["atlas_transform"] if isinstance(doc, dict) else doc,
                           dtype=np.float64)

    return Subject(id=directory.name, labels=labels, reals=reals, atlas_transform=atlas)


def _subgrid(grid: VoxelGrid, lo, dims) -> VoxelGrid:
    origin = grid.voxel_to_world(np.asarray(lo, dtype=np.float64))
    return VoxelGrid(dims=tuple(dims), spacing=grid.spacing, origin=tuple(origin),
                     orientation=grid.orientation)


def _run_tasks(tasks, threads: int):
    # oversubscribing beyond the physical cores only adds contention with
    # the numba kernel pool, so cap the python-level width
    width = min(threads, len(tasks), os.cpu_count() or 1)
    if width <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=width) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


def _draw_deformation(subject: Subject, config: GenerationConfig, iteration: int,
                      patch_lo: np.ndarray) -> DeformationField:
    """Shared per-batch deformation, materialized on the patch plus a margin.

    The margin covers the largest possible flow displacement (bounded by
    the velocity amplitude), so interior patch voxels see the same values
    a full-grid integration would produce.
    """
    deform = config.deformation
    rng = rngmod.batch_stream(config.master_seed, subject.id, iteration, rngmod.STAGE_DEFORM)
    affine = sample_affine(rng, rotation=deform.rotation_deg, scaling=deform.scaling,
                           shearing=deform.shearing, translation=deform.translation_mm)
    amplitude = float(rng.uniform(*deform.svf_amplitude_mm))

    grid = subject.labels.grid
    margin = [int(math.ceil(amplitude / s)) + 2 for s in grid.spacing]
    lo = np.maximum(patch_lo - margin, 0)
    hi = np.minimum(patch_lo + np.asarray(config.patch_size) + margin, grid.dims)
    sub = _subgrid(grid, lo, hi - lo)

    svf = sample_svf(rng, sub, deform.svf_control_spacing_mm, amplitude)
    displacement = integrate_svf(svf, deform.integration_steps)
    provenance = {
        "svf": {"control_spacing_mm": deform.svf_control_spacing_mm,
                "amplitude_mm": amplitude,
                "integration_steps": deform.integration_steps},
        "subgrid_lo": [int(v) for v in lo],
    }
    phi_sub = compose(displacement, affine, sub, provenance)

    # crop the field to the exact patch
    offset = patch_lo - lo
    sl = tuple(slice(int(o), int(o + p)) for o, p in zip(offset, config.patch_size))
    patch_grid = _subgrid(grid, patch_lo, config.patch_size)
    coords = Volume(patch_grid, phi_sub.coords.data[sl])
    return DeformationField(patch_grid, coords, phi_sub.provenance)


def _draw_patch(subject: Subject, config: GenerationConfig, iteration: int) -> np.ndarray:
    """Batch-shared random patch origin (the whole batch depicts one crop)."""
    grid = subject.labels.grid
    patch = np.asarray(config.patch_size)
    if np.any(patch > grid.dims):
        raise ConfigError(f"patch_size {tuple(config.patch_size)} exceeds subject "
                          f"grid {grid.dims} for subject {subject.id}")
    rng_patch = rngmod.batch_stream(config.master_seed, subject.id, iteration,
                                    rngmod.STAGE_PATCH)
    return np.array([int(rng_patch.integers(0, d - p + 1))
                     for d, p in zip(grid.dims, patch)])


def batch_deformation(subject: Subject, config: GenerationConfig,
                      iteration: int) -> DeformationField:
    """The deformation a batch would use, for inspection/export."""
    return _draw_deformation(subject, config, iteration,
                             _draw_patch(subject, config, iteration))


def generate_batch(subject: Subject, config: GenerationConfig, iteration: int,
                   threads: int = 1) -> list:
    """Produce one intra-subject mini-batch of SampleBundles.

    One deformation and one patch location are shared across the batch;
    contrast, bias, gamma, noise, and mix-up are drawn per sample from
    independent keyed streams, with corruption strength at severity s_i.

    ``threads`` widens the numba kernel pool (bounded by the machine);
    results are bit-identical for every thread count.
    """
    kernel_threads = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    previous_threads = numba.get_num_threads()
    numba.set_num_threads(kernel_threads)
    try:
        return _generate_batch_inner(subject, config, iteration, int(threads))
    finally:
        numba.set_num_threads(previous_threads)


def _generate_batch_inner(subject: Subject, config: GenerationConfig, iteration: int,
                          threads: int) -> list:
    patch_lo = _draw_patch(subject, config, iteration)
    phi = _draw_deformation(subject, config, iteration, patch_lo)
    base_targets = assemble_targets(
        subject, phi,
        bias_field=Volume(phi.grid, np.ones(phi.grid.dims + (1,), dtype=np.float32)),
        structures=config.distance_structures,
        signed_distance=config.signed_distance,
        policy=config.out_of_domain,
    )

    severities = severity_schedule(config.batch_size)
    keys = dict(master_seed=config.master_seed, subject=subject.id, iteration=iteration)

    def build_sample(index: int) -> SampleBundle:
        severity = severities[index]
        params = interpolate_corruption(config.mild, config.severe, severity)

        def stream(stage):
            return rngmod.sample_stream(config.master_seed, subject.id, iteration,
                                        index, stage)

        painted, contrast_params = paint_contrast(base_targets.seg, stream(rngmod.STAGE_CONTRAST),
                                                  config.contrast)
        bias = sample_bias_field(stream(rngmod.STAGE_BIAS), phi.grid,
                                 params.bias_amplitude, params.bias_control_spacing)
        vol = apply_bias(painted, bias)
        vol, gamma = gamma_augment(vol, stream(rngmod.STAGE_GAMMA), params.gamma_log_std)
        vol = simulate_resolution(vol, params.slice_spacing)
        vol = add_noise(vol, params.noise_sigma, stream(rngmod.STAGE_NOISE))

        modality = None
        lam = 1.0
        if config.mixup_enabled and base_targets.modality_targets:
            rng_mix = stream(rngmod.STAGE_MIXUP)
            names = sorted(base_targets.modality_targets)
            modality = names[int(rng_mix.integers(0, len(names)))]
            lam = float(rng_mix.uniform(*config.mixup_lambda_range))
            vol = mixup(vol, base_targets.modality_targets[modality], lam)

        params = replace(params, mixup_lambda=lam)
        provenance = {
            **keys,
            "sample": index,
            "severity": severity,
            "stage_order": list(STAGE_ORDER),
            "patch_lo": [int(v) for v in patch_lo],
            "patch_size": [int(v) for v in config.patch_size],
            "deformation": phi.provenance,
            "contrast": {str(k): [v[0], v[1]] for k, v in contrast_params.items()},
            "corruption": params.to_dict(),
            "gamma": gamma,
            "mixup_modality": modality,
            "out_of_domain": config.out_of_domain,
        }
        targets = replace(base_targets, bias_gt=bias)
        return SampleBundle(input=vol, targets=targets, severity=severity,
                            provenance=provenance)

    return _run_tasks([lambda i=i: build_sample(i) for i in range(config.batch_size)],
                      threads)
