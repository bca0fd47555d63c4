import json

import numpy as np
import pytest

from synthvol.core import LabelVolume, Volume, VoxelGrid
from synthvol.nifti import write_nifti


def make_grid(dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), orientation=None):
    if orientation is None:
        orientation = np.eye(3)
    return VoxelGrid(dims=dims, spacing=spacing, origin=origin, orientation=orientation)


def random_volume(grid, rng, channels=1, lo=0.0, hi=1.0):
    data = rng.uniform(lo, hi, size=grid.dims + (channels,)).astype(np.float32)
    return Volume(grid, data)


def smooth_volume(grid, rng=None):
    """Low-frequency sinusoid mixture in [0, 1]; safe for interpolation tests."""
    ii, jj, kk = np.meshgrid(*(np.linspace(0, np.pi, d) for d in grid.dims), indexing="ij")
    data = 0.5 + 0.25 * np.sin(ii) * np.cos(jj) + 0.15 * np.sin(kk + 0.7)
    return Volume(grid, np.clip(data, 0.0, 1.0).astype(np.float32))


def label_phantom(dims=(48, 48, 48), spacing=(1.0, 1.0, 1.0)):
    """Concentric-ellipsoid label map: background 0, shells 1-2, cortex 3/42, core 4."""
    grid = make_grid(dims, spacing)
    axes = [np.linspace(-1.0, 1.0, d) for d in dims]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(xx**2 + 1.2 * yy**2 + 0.9 * zz**2)
    labels = np.zeros(dims, dtype=np.int32)
    labels[r < 0.92] = 1
    labels[r < 0.78] = 2
    cortex = (r < 0.62) & (r >= 0.38)
    labels[cortex & (xx < 0)] = 3
    labels[cortex & (xx >= 0)] = 42
    labels[r < 0.38] = 4
    return LabelVolume(grid, labels)


def phantom_modality(labels, seed=0, blur=1.0):
    """A synthetic 'real' acquisition: per-label intensities plus smooth variation."""
    from synthvol.sampling import gaussian_blur

    rng = np.random.default_rng(seed)
    lut = np.zeros(max(labels.label_set) + 1, dtype=np.float32)
    for lab in labels.label_set:
        lut[lab] = rng.uniform(0.1, 0.9) if lab else 0.0
    data = lut[labels.labels] + rng.normal(0, 0.02, labels.grid.dims).astype(np.float32)
    vol = Volume(labels.grid, np.clip(data, 0.0, 1.0))
    return gaussian_blur(vol, blur)


def write_subject(directory, labels, modalities=None, atlas_transform=None):
    directory.mkdir(parents=True, exist_ok=True)
    write_nifti(directory / "labels.nii.gz", labels.grid, labels)
    for name, vol in (modalities or {}).items():
        write_nifti(directory / f"{name}.nii.gz", vol.grid, vol)
    if atlas_transform is not None:
        with open(directory / "atlas.json", "w", encoding="utf-8") as fh:
            json.dump({"atlas_transform": np.asarray(atlas_transform).tolist()}, fh)
    return directory


SMALL_CONFIG = {
    "batch_size": 4,
    "patch_size": [24, 24, 24],
    "deformation": {
        "rotation_deg": [-10.0, 10.0],
        "scaling": [0.9, 1.1],
        "shearing": [-0.01, 0.01],
        "translation_mm": [-4.0, 4.0],
        "svf_control_spacing_mm": 8.0,
        "svf_amplitude_mm": [0.0, 2.0],
        "integration_steps": 7,
    },
    "corruption": {
        "mild": {"bias_amplitude": 0.02, "bias_control_spacing": 12.0,
                 "noise_sigma": 1.0, "slice_spacing": [1.0, 1.0, 1.0],
                 "gamma_log_std": 0.0},
        "severe": {"bias_amplitude": 0.3, "bias_control_spacing": 12.0,
                   "noise_sigma": 10.0, "slice_spacing": [1.2, 1.2, 3.0],
                   "gamma_log_std": 0.15},
    },
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def phantom():
    return label_phantom()


@pytest.fixture
def small_config_dict():
    return json.loads(json.dumps(SMALL_CONFIG))
