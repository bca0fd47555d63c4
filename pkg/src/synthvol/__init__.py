"""synthvol: deterministic synthetic brain volumes with multi-task targets.

Turns 3D label maps into unlimited training samples of random contrast,
resolution, and corruption level, together with the ground-truth targets
(segmentation, distance maps, atlas coordinates, bias field, real-modality
reconstructions) and the metric suite to score predictions against them.
"""

import warnings as _warnings

# numba emits a benign TBB-version notice on import in some environments
_warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

__version__ = "0.1.0"

from .appearance import (ContrastPrior, CorruptionParams, add_noise, apply_bias,
                         gamma_augment, mixup, paint_contrast, paint_with_params,
                         sample_bias_field, simulate_resolution)
from .config import GenerationConfig, config_from_dict, default_config, load_config
from .core import LabelVolume, Volume, VoxelGrid
from .deform import (AffineParams, DeformationField, VelocityField, compose,
                     integrate_svf, jacobian_determinant, sample_affine, sample_svf,
                     warp_image, warp_labels)
from .errors import (ConfigError, DomainError, FormatError, InputError, ShapeError,
                     SynthvolError)
from .generator import (SampleBundle, batch_deformation, generate_batch, load_subject,
                        severity_schedule)
from .metrics import MetricReport, dice, l1, ms_ssim, norm_l2, psnr, ssim
from .nifti import read_nifti, write_nifti
from .sampling import (gaussian_blur, nearest_sample, resample, resample_labels,
                       sample_points, trilinear_sample)
from .targets import (Subject, TargetSet, assemble_targets, atlas_coordinate_target,
                      distance_map)

__all__ = [
    "__version__",
    "AffineParams", "ContrastPrior", "CorruptionParams", "DeformationField",
    "GenerationConfig", "LabelVolume", "MetricReport", "SampleBundle", "Subject",
    "TargetSet", "VelocityField", "Volume", "VoxelGrid",
    "ConfigError", "DomainError", "FormatError", "InputError", "ShapeError",
    "SynthvolError",
    "add_noise", "apply_bias", "assemble_targets", "atlas_coordinate_target",
    "batch_deformation", "compose", "config_from_dict", "default_config", "dice",
    "distance_map", "gamma_augment", "gaussian_blur", "generate_batch",
    "integrate_svf", "jacobian_determinant", "l1", "load_config", "load_subject",
    "mixup", "ms_ssim", "nearest_sample", "norm_l2", "paint_contrast",
    "paint_with_params", "psnr", "read_nifti", "resample", "resample_labels",
    "sample_affine", "sample_bias_field", "sample_points", "sample_svf",
    "severity_schedule", "simulate_resolution", "ssim", "trilinear_sample",
    "warp_image", "warp_labels", "write_nifti",
]
