"""Contrast painting, corruption chain, and real-synth mix-up.

Intensities live on a normalized [0, 1] scale throughout; noise levels are
configured on the conventional 0-255 scale and divided by 255 internally.
Every operation here maps [0, 1] volumes back into [0, 1].

The per-label painting draws a mean and a standard deviation for each
region, then fills the region with Gaussian noise around them.  Standard
deviations use the absolute value of a centered Gaussian draw (a plain
Gaussian admits negative scales).  Drawn (mu, sigma) pairs are returned so
provenance can replay the exact appearance.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LabelVolume, Volume, VoxelGrid
from .deform import coarse_gaussian_field
from .errors import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class ContrastPrior:
    """Hyperpriors for per-label intensity means and spreads."""

    mu_mean: float = 0.5
    mu_std: float = 0.2
    sigma_scale: float = 0.1
    per_label: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mu_std < 0 or self.sigma_scale < 0:
            raise ConfigError("contrast prior: mu_std and sigma_scale must be >= 0")
        for lab, triple in self.per_label.items():
            if len(triple) != 3 or triple[1] < 0 or triple[2] < 0:
                raise ConfigError(f"contrast prior: per_label[{lab}] must be "
                                  "(mu_mean, mu_std >= 0, sigma_scale >= 0)")

    def params_for(self, label: int):
        return self.per_label.get(label, (self.mu_mean, self.mu_std, self.sigma_scale))


@dataclass(frozen=True)
class CorruptionParams:
    """One sample's corruption settings (the severity-interpolated leg)."""

    bias_amplitude: float = 0.0
    bias_control_spacing: float = 40.0
    noise_sigma: float = 0.0  # 0-255 scale
    slice_spacing: tuple = (1.0, 1.0, 1.0)
    gamma_log_std: float = 0.0
    mixup_lambda: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "slice_spacing", tuple(float(s) for s in self.slice_spacing))
        fields = {
            "bias_amplitude": self.bias_amplitude,
            "bias_control_spacing": self.bias_control_spacing,
            "noise_sigma": self.noise_sigma,
            "gamma_log_std": self.gamma_log_std,
        }
        for name, val in fields.items():
            if not math.isfinite(val) or val < 0:
                raise ConfigError(f"corruption.{name} must be finite and >= 0, got {val}")
        if any(s <= 0 for s in self.slice_spacing):
            raise ConfigError(f"corruption.slice_spacing must be > 0, got {self.slice_spacing}")
        if not 0.0 <= self.mixup_lambda <= 1.0:
            raise ConfigError(f"corruption.mixup_lambda must be in [0, 1], got {self.mixup_lambda}")

    def to_dict(self) -> dict:
        return {
            "bias_amplitude": self.bias_amplitude,
            "bias_control_spacing": self.bias_control_spacing,
            "noise_sigma": self.noise_sigma,
            "slice_spacing": list(self.slice_spacing),
            "gamma_log_std": self.gamma_log_std,
            "mixup_lambda": self.mixup_lambda,
        }


def _clamp01(data: np.ndarray) -> np.ndarray:
    return np.clip(data, 0.0, 1.0)


def draw_contrast_params(labels: LabelVolume, rng: np.random.Generator,
                         prior: ContrastPrior) -> dict:
    """Draw (mu_l, sigma_l) per label, in sorted label order."""
    params = {}
    for lab in labels.label_set:
        mu_mean, mu_std, sigma_scale = prior.params_for(lab)
        mu = rng.normal(mu_mean, mu_std)
        sigma = abs(rng.normal(0.0, sigma_scale))
        params[int(lab)] = (float(mu), float(sigma))
    return params


def paint_with_params(labels: LabelVolume, rng: np.random.Generator, params: dict) -> Volume:
    """Fill each label region with N(mu_l, sigma_l) noise, clamped to [0, 1]."""
    missing = [lab for lab in labels.label_set if lab not in params]
    if missing:
        raise DomainError(f"no contrast parameters for labels {missing}")
    top = max(labels.label_set) + 1
    mu_lut = np.zeros(top, dtype=np.float32)
    sigma_lut = np.zeros(top, dtype=np.float32)
    for lab, (mu, sigma) in params.items():
        if 0 <= lab < top:
            mu_lut[lab] = mu
            sigma_lut[lab] = sigma
    noise = rng.standard_normal(size=labels.grid.dims, dtype=np.float32)
    data = mu_lut[labels.labels] + sigma_lut[labels.labels] * noise
    return Volume(labels.grid, _clamp01(data))


def paint_contrast(labels: LabelVolume, rng: np.random.Generator, prior: ContrastPrior):
    """Random contrast synthesis on a label map.

    Returns (volume, params) where params maps label -> drawn (mu, sigma);
    replaying ``paint_with_params`` with the same stream reproduces the
    volume bit for bit.
    """
    if len(labels.label_set) == 0:
        raise DomainError("label volume is empty")
    params = draw_contrast_params(labels, rng, prior)
    return paint_with_params(labels, rng, params), params


def sample_bias_field(rng: np.random.Generator, grid: VoxelGrid, amplitude: float,
                      control_spacing: float) -> Volume:
    """Smooth strictly-positive multiplicative field: exp of a coarse Gaussian log-field."""
    if amplitude < 0:
        raise ConfigError(f"bias amplitude must be >= 0, got {amplitude}")
    if amplitude == 0.0:
        return Volume(grid, np.ones(grid.dims + (1,), dtype=np.float32))
    log_field = amplitude * coarse_gaussian_field(rng, grid, control_spacing, 1)
    return Volume(grid, np.exp(log_field).astype(np.float32))


def apply_bias(vol: Volume, bias: Volume) -> Volume:
    """Voxelwise multiplication by the bias field, re-clamped to [0, 1]."""
    if vol.grid.dims != bias.grid.dims:
        raise ShapeError(f"bias grid {bias.grid.dims} does not match volume {vol.grid.dims}")
    return Volume(vol.grid, _clamp01(vol.data * bias.data))


def add_noise(vol: Volume, noise_sigma: float, rng: np.random.Generator) -> Volume:
    """Additive Gaussian noise; sigma is on the 0-255 scale."""
    if noise_sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {noise_sigma}")
    if noise_sigma == 0.0:
        return vol
    noise = rng.standard_normal(size=vol.data.shape, dtype=np.float32)
    return Volume(vol.grid, _clamp01(vol.data + np.float32(noise_sigma / 255.0) * noise))


def anti_alias_sigma_mm(native: float, slice_spacing: float) -> float:
    """Anti-alias blur width: 0.85 * (ratio - 1) * native, in mm; 0 when ratio is 1."""
    ratio = slice_spacing / native
    return 0.85 * (ratio - 1.0) * native if ratio > 1.0 else 0.0


def simulate_resolution(vol: Volume, slice_spacing, native_spacing=None) -> Volume:
    """Emulate a thick-slice acquisition resampled back to the native grid.

    Blur with the per-axis anti-alias kernel, pull onto the coarse
    acquisition grid, then pull back up to the native grid.
    """
    from .sampling import gaussian_blur, resample

    native = tuple(float(s) for s in (native_spacing or vol.grid.spacing))
    slices = tuple(float(s) for s in np.atleast_1d(np.asarray(slice_spacing, dtype=np.float64)))
    if len(slices) == 1:
        slices = slices * 3
    if any(t < n - 1e-9 for t, n in zip(slices, native)):
        raise ConfigError(f"slice spacing {slices} must be >= native spacing {native}")
    if all(abs(t - n) < 1e-12 for t, n in zip(slices, native)):
        return vol

    sigma_vox = [anti_alias_sigma_mm(n, t) / n for n, t in zip(native, slices)]
    blurred = gaussian_blur(vol, sigma_vox)

    dims = vol.grid.dims
    coarse_dims = tuple(
        max(1, int(math.floor((d - 1) * n / t + 1e-9)) + 1)
        for d, n, t in zip(dims, native, slices)
    )
    coarse = VoxelGrid(dims=coarse_dims, spacing=slices, origin=vol.grid.origin,
                       orientation=vol.grid.orientation)
    low = resample(blurred, coarse, mode="trilinear")
    back = resample(low, vol.grid, mode="trilinear")
    return Volume(vol.grid, _clamp01(back.data))


def apply_gamma(vol: Volume, gamma: float) -> Volume:
    """Deterministic exponent transform vol ** gamma (order-preserving on [0, 1])."""
    if gamma <= 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    if gamma == 1.0:
        return vol
    return Volume(vol.grid, _clamp01(np.power(vol.data, np.float32(gamma))))


def gamma_augment(vol: Volume, rng: np.random.Generator, gamma_log_std: float):
    """Random gamma (exponent) transform; returns (volume, gamma)."""
    if gamma_log_std < 0:
        raise ConfigError(f"gamma_log_std must be >= 0, got {gamma_log_std}")
    if gamma_log_std == 0.0:
        return vol, 1.0
    gamma = float(np.exp(rng.normal(0.0, gamma_log_std)))
    return apply_gamma(vol, gamma), gamma


def mixup(synth: Volume, real: Volume, lam: float) -> Volume:
    """Convex blend lam * synth + (1 - lam) * real, exact at the endpoints.

    Evaluated in float64 as real + lam * (synth - real) so every output
    voxel lies inside [min(synth, real), max(synth, real)] even after
    rounding back to float32.
    """
    if synth.grid.dims != real.grid.dims:
        raise ShapeError(f"mix-up grids differ: {synth.grid.dims} vs {real.grid.dims}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mix-up lambda must be in [0, 1], got {lam}")
    s = synth.data.astype(np.float64)
    r = real.data.astype(np.float64)
    return Volume(synth.grid, (r + lam * (s - r)).astype(np.float32))
