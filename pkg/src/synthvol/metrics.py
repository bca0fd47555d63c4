"""Evaluation metrics: L1, PSNR, SSIM, MS-SSIM, Dice, and scale-free norm-L2.

All computations run in float64.  SSIM uses the canonical configuration
(Gaussian window 11, sigma 1.5, K1 = 0.01, K2 = 0.03) extended separably
to 3D, averaged over the valid region (windows fully inside the volume).
MS-SSIM uses 5 dyadic scales with the canonical weights.  norm-L2 divides
both fields by their in-mask mean before the RMS difference, which makes
it invariant to any global positive rescaling of either argument.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .core import LabelVolume, Volume
from .errors import DomainError, ShapeError

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _check_pair(a: Volume, b: Volume):
    if a.grid.dims != b.grid.dims or a.channels != b.channels:
        raise ShapeError(f"volume shapes differ: {a.grid.dims}x{a.channels} "
                         f"vs {b.grid.dims}x{b.channels}")


def _check_mask(mask, vol: Volume) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.shape != vol.grid.dims:
        raise ShapeError(f"mask shape {m.shape} does not match grid {vol.grid.dims}")
    if not m.any():
        raise DomainError("mask is empty")
    return m


def l1(a: Volume, b: Volume, mask=None) -> float:
    """Mean absolute difference over the mask (default: whole grid)."""
    _check_pair(a, b)
    diff = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
    if mask is None:
        return float(diff.mean())
    return float(diff[_check_mask(mask, a)].mean())


def psnr(a: Volume, b: Volume, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf for bit-identical inputs."""
    _check_pair(a, b)
    if peak <= 0:
        raise DomainError(f"peak must be > 0, got {peak}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(window: int, sigma: float) -> np.ndarray:
    radius = window // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _local_means(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = arr
    for axis in range(3):
        out = correlate1d(out, kernel, axis=axis, mode="reflect")
    return out


def _ssim_terms(a: np.ndarray, b: np.ndarray, window: int, sigma: float,
                c1: float, c2: float):
    """(luminance*contrast map, contrast-structure map) over the valid region."""
    kernel = _gaussian_window(window, sigma)
    r = window // 2
    mu_a = _local_means(a, kernel)
    mu_b = _local_means(b, kernel)
    aa = _local_means(a * a, kernel)
    bb = _local_means(b * b, kernel)
    ab = _local_means(a * b, kernel)
    sl = (slice(r, a.shape[0] - r), slice(r, a.shape[1] - r), slice(r, a.shape[2] - r))
    mu_a, mu_b, aa, bb, ab = (x[sl] for x in (mu_a, mu_b, aa, bb, ab))
    var_a = aa - mu_a * mu_a
    var_b = bb - mu_b * mu_b
    cov = ab - mu_a * mu_b
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return lum * cs, cs


def ssim(a: Volume, b: Volume, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, peak: float = 1.0) -> float:
    """Mean 3D SSIM over windows fully inside the volume."""
    _check_pair(a, b)
    if a.channels != 1:
        raise ShapeError("ssim expects scalar volumes")
    if min(a.grid.dims) < window:
        raise DomainError(f"volume dims {a.grid.dims} smaller than the SSIM window {window}")
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    full, _ = _ssim_terms(a.scalars.astype(np.float64), b.scalars.astype(np.float64),
                          window, sigma, c1, c2)
    return float(full.mean())


def _downsample2(arr: np.ndarray) -> np.ndarray:
    nx, ny, nz = (d // 2 for d in arr.shape)
    trimmed = arr[: 2 * nx, : 2 * ny, : 2 * nz]
    return trimmed.reshape(nx, 2, ny, 2, nz, 2).mean(axis=(1, 3, 5))


def ms_ssim(a: Volume, b: Volume, window: int = 11, sigma: float = 1.5,
            k1: float = 0.01, k2: float = 0.03, peak: float = 1.0,
            weights=MS_SSIM_WEIGHTS) -> float:
    """Multi-scale SSIM over dyadic scales (canonical 5-scale weighting)."""
    _check_pair(a, b)
    if a.channels != 1:
        raise ShapeError("ms_ssim expects scalar volumes")
    levels = len(weights)
    if min(a.grid.dims) // (2 ** (levels - 1)) < window:
        raise DomainError(
            f"volume dims {a.grid.dims} too small for {levels}-scale MS-SSIM "
            f"with window {window} (need >= {window * 2 ** (levels - 1)} per axis)"
        )
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    xa = a.scalars.astype(np.float64)
    xb = b.scalars.astype(np.float64)
    score = 1.0
    for level in range(levels):
        full, cs = _ssim_terms(xa, xb, window, sigma, c1, c2)
        if level < levels - 1:
            score *= max(float(cs.mean()), 0.0) ** weights[level]
            xa = _downsample2(xa)
            xb = _downsample2(xb)
        else:
            score *= max(float(full.mean()), 0.0) ** weights[level]
    return float(score)


@dataclass(frozen=True)
class DiceResult:
    per_label: dict
    mean: float


def dice(a: LabelVolume, b: LabelVolume) -> DiceResult:
    """Per-label overlap 2|A n B| / (|A| + |B|), mean over non-background labels.

    Labels absent from both volumes are excluded rather than scored 1.
    """
    if a.grid.dims != b.grid.dims:
        raise ShapeError(f"label grids differ: {a.grid.dims} vs {b.grid.dims}")
    labels = sorted(set(a.label_set) | set(b.label_set))
    per_label = {}
    for lab in labels:
        in_a = a.labels == lab
        in_b = b.labels == lab
        na = int(in_a.sum())
        nb = int(in_b.sum())
        if na + nb == 0:
            continue
        per_label[lab] = 2.0 * int((in_a & in_b).sum()) / (na + nb)
    fg = [v for lab, v in per_label.items() if lab != 0]
    mean = float(np.mean(fg)) if fg else float("nan")
    return DiceResult(per_label=per_label, mean=mean)


def norm_l2(estimate: Volume, truth: Volume, mask=None) -> float:
    """RMS difference of the mean-normalized fields over the mask."""
    _check_pair(estimate, truth)
    if estimate.channels != 1:
        raise ShapeError("norm_l2 expects scalar volumes")
    e = estimate.scalars.astype(np.float64)
    t = truth.scalars.astype(np.float64)
    if mask is not None:
        m = _check_mask(mask, estimate)
        e = e[m]
        t = t[m]
    e_mean = float(e.mean())
    t_mean = float(t.mean())
    if e_mean <= 0 or t_mean <= 0:
        raise DomainError(f"norm_l2 requires positive in-mask means, got {e_mean}, {t_mean}")
    diff = e / e_mean - t / t_mean
    return float(np.sqrt(np.mean(diff * diff)))


METRIC_NAMES = ("l1", "psnr", "ssim", "ms_ssim", "dice", "norm_l2")


@dataclass(frozen=True)
class MetricReport:
    """Scalar metric values plus the per-label Dice table and run metadata."""

    values: dict
    dice_per_label: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "Infinity"
            return v

        out = {"metrics": {k: enc(v) for k, v in self.values.items()},
               "metadata": self.metadata}
        if self.dice_per_label is not None:
            out["dice_per_label"] = {str(k): v for k, v in self.dice_per_label.items()}
        return out

    def to_text(self) -> str:
        width = max((len(k) for k in self.values), default=6) + 2
        lines = [f"{k:<{width}}{v:.6f}" if isinstance(v, float) and math.isfinite(v)
                 else f"{k:<{width}}{v}" for k, v in self.values.items()]
        if self.dice_per_label:
            lines.append("dice per label:")
            lines.extend(f"  {lab:<6}{v:.6f}" for lab, v in sorted(self.dice_per_label.items()))
        return "\n".join(lines)
