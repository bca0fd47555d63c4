import json

import numpy as np
import pytest

from synthvol.core import LabelVolume, Volume, VoxelGrid
from synthvol.nifti import write_nifti
from synthvol.sampling import gaussian_blur


def sphere_phantom(dims=(40, 40, 40)):
    grid = VoxelGrid(dims=dims)
    axes = [np.linspace(-1.0, 1.0, d) for d in dims]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(xx**2 + yy**2 + zz**2)
    labels = np.zeros(dims, dtype=np.int32)
    labels[r < 0.9] = 1
    labels[r < 0.6] = 3
    labels[r < 0.3] = 4
    return LabelVolume(grid, labels)


def modality(labels, seed):
    rng = np.random.default_rng(seed)
    lut = np.zeros(max(labels.label_set) + 1, dtype=np.float32)
    for lab in labels.label_set:
        lut[lab] = rng.uniform(0.2, 0.9) if lab else 0.0
    vol = Volume(labels.grid, np.clip(lut[labels.labels], 0, 1))
    return gaussian_blur(vol, 1.0)


@pytest.fixture
def workspace(tmp_path):
    subjects = tmp_path / "subjects"
    a = sphere_phantom()
    write_subject = subjects / "a01"
    write_subject.mkdir(parents=True)
    write_nifti(write_subject / "labels.nii.gz", a.grid, a)
    write_nifti(write_subject / "t1w.nii.gz", a.grid, modality(a, 1))

    b = sphere_phantom(dims=(36, 36, 36))
    bdir = subjects / "b02"
    bdir.mkdir(parents=True)
    write_nifti(bdir / "labels.nii.gz", b.grid, b)

    config = {
        "master_seed": 424242,
        "batch_size": 3,
        "patch_size": [20, 20, 20],
        "deformation": {"svf_control_spacing_mm": 8.0, "svf_amplitude_mm": [0.0, 1.5]},
        "corruption": {
            "mild": {"bias_amplitude": 0.05, "bias_control_spacing": 10.0,
                     "noise_sigma": 1.0, "slice_spacing": [1.0, 1.0, 1.0]},
            "severe": {"bias_amplitude": 0.3, "bias_control_spacing": 10.0,
                       "noise_sigma": 10.0, "slice_spacing": [1.0, 1.0, 3.0]},
        },
        "targets": {"distance_structures": {"brain": "foreground", "core": [4]}},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, config_path, subjects
