"""Interpolation, resampling, and separable Gaussian filtering.

One numba kernel implements trilinear gathering for every consumer in the
package (point probes, warps, grid resampling), so the batched paths are
bit-identical to looping the scalar probe over voxels.  Interpolation
weights and arithmetic are evaluated in float64 per point and the result
is stored as float32.

Out-of-domain coordinates follow a selectable policy: ``clamp`` (default)
repeats the edge value, ``zero`` returns 0 outside ``[0, dims-1]``.
"""

import math

import numba
import numpy as np
from scipy.ndimage import correlate1d

from .core import LabelVolume, Volume, VoxelGrid
from .errors import ShapeError

POLICIES = ("clamp", "zero")

_CLAMP = 0
_ZERO = 1


def _policy_code(policy: str) -> int:
    if policy not in POLICIES:
        raise ValueError(f"unknown out-of-domain policy {policy!r}, expected one of {POLICIES}")
    return _CLAMP if policy == "clamp" else _ZERO


@numba.njit(cache=True, parallel=True, nogil=True)
def _trilinear_kernel(data, pts, policy, out):  # pragma: no cover - jitted
    nx, ny, nz, nc = data.shape
    n = pts.shape[0]
    for i in numba.prange(n):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        inside = (0.0 <= x <= nx - 1.0) and (0.0 <= y <= ny - 1.0) and (0.0 <= z <= nz - 1.0)
        if policy == 1 and not inside:
            for c in range(nc):
                out[i, c] = 0.0
            continue
        if x < 0.0:
            x = 0.0
        elif x > nx - 1.0:
            x = nx - 1.0
        if y < 0.0:
            y = 0.0
        elif y > ny - 1.0:
            y = ny - 1.0
        if z < 0.0:
            z = 0.0
        elif z > nz - 1.0:
            z = nz - 1.0
        x0 = int(x)
        y0 = int(y)
        z0 = int(z)
        if x0 > nx - 2:
            x0 = nx - 2
        if y0 > ny - 2:
            y0 = ny - 2
        if z0 > nz - 2:
            z0 = nz - 2
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if z0 < 0:
            z0 = 0
        tx = x - x0
        ty = y - y0
        tz = z - z0
        x1 = x0 + 1 if nx > 1 else x0
        y1 = y0 + 1 if ny > 1 else y0
        z1 = z0 + 1 if nz > 1 else z0
        for c in range(nc):
            # corners widened to float64 so the whole lerp chain runs in doubles
            c000 = np.float64(data[x0, y0, z0, c])
            c001 = np.float64(data[x0, y0, z1, c])
            c010 = np.float64(data[x0, y1, z0, c])
            c011 = np.float64(data[x0, y1, z1, c])
            c100 = np.float64(data[x1, y0, z0, c])
            c101 = np.float64(data[x1, y0, z1, c])
            c110 = np.float64(data[x1, y1, z0, c])
            c111 = np.float64(data[x1, y1, z1, c])
            c00 = c000 + (c001 - c000) * tz
            c01 = c010 + (c011 - c010) * tz
            c10 = c100 + (c101 - c100) * tz
            c11 = c110 + (c111 - c110) * tz
            c0 = c00 + (c01 - c00) * ty
            c1 = c10 + (c11 - c10) * ty
            out[i, c] = c0 + (c1 - c0) * tx


@numba.njit(cache=True, parallel=True, nogil=True)
def _nearest_kernel(values, pts, policy, fill, out):  # pragma: no cover - jitted
    nx, ny, nz = values.shape
    n = pts.shape[0]
    for i in numba.prange(n):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        inside = (0.0 <= x <= nx - 1.0) and (0.0 <= y <= ny - 1.0) and (0.0 <= z <= nz - 1.0)
        if policy == 1 and not inside:
            out[i] = fill
            continue
        # round half toward the lower index so tie-breaks are axis-symmetric
        ix = int(math.ceil(x - 0.5))
        iy = int(math.ceil(y - 0.5))
        iz = int(math.ceil(z - 0.5))
        if ix < 0:
            ix = 0
        elif ix > nx - 1:
            ix = nx - 1
        if iy < 0:
            iy = 0
        elif iy > ny - 1:
            iy = ny - 1
        if iz < 0:
            iz = 0
        elif iz > nz - 1:
            iz = nz - 1
        out[i] = values[ix, iy, iz]


@numba.njit(cache=True, parallel=True, nogil=True)
def _trilinear_axes_kernel(data, ax, ay, az, policy, out):  # pragma: no cover - jitted
    """Trilinear resampling on a separable coordinate lattice ax x ay x az."""
    nx, ny, nz, nc = data.shape
    mx = ax.shape[0]
    my = ay.shape[0]
    mz = az.shape[0]
    x0s = np.empty(mx, np.int64)
    tx_s = np.empty(mx, np.float64)
    x_in = np.empty(mx, np.bool_)
    for i in range(mx):
        x = ax[i]
        x_in[i] = 0.0 <= x <= nx - 1.0
        if x < 0.0:
            x = 0.0
        elif x > nx - 1.0:
            x = nx - 1.0
        x0 = int(x)
        if x0 > nx - 2:
            x0 = nx - 2
        if x0 < 0:
            x0 = 0
        x0s[i] = x0
        tx_s[i] = x - x0
    y0s = np.empty(my, np.int64)
    ty_s = np.empty(my, np.float64)
    y_in = np.empty(my, np.bool_)
    for j in range(my):
        y = ay[j]
        y_in[j] = 0.0 <= y <= ny - 1.0
        if y < 0.0:
            y = 0.0
        elif y > ny - 1.0:
            y = ny - 1.0
        y0 = int(y)
        if y0 > ny - 2:
            y0 = ny - 2
        if y0 < 0:
            y0 = 0
        y0s[j] = y0
        ty_s[j] = y - y0
    z0s = np.empty(mz, np.int64)
    tz_s = np.empty(mz, np.float64)
    z_in = np.empty(mz, np.bool_)
    for k in range(mz):
        z = az[k]
        z_in[k] = 0.0 <= z <= nz - 1.0
        if z < 0.0:
            z = 0.0
        elif z > nz - 1.0:
            z = nz - 1.0
        z0 = int(z)
        if z0 > nz - 2:
            z0 = nz - 2
        if z0 < 0:
            z0 = 0
        z0s[k] = z0
        tz_s[k] = z - z0
    for i in numba.prange(mx):
        x0 = x0s[i]
        x1 = x0 + 1 if nx > 1 else x0
        tx = tx_s[i]
        for j in range(my):
            y0 = y0s[j]
            y1 = y0 + 1 if ny > 1 else y0
            ty = ty_s[j]
            for k in range(mz):
                if policy == 1 and not (x_in[i] and y_in[j] and z_in[k]):
                    for c in range(nc):
                        out[i, j, k, c] = 0.0
                    continue
                z0 = z0s[k]
                z1 = z0 + 1 if nz > 1 else z0
                tz = tz_s[k]
                for c in range(nc):
                    c000 = np.float64(data[x0, y0, z0, c])
                    c001 = np.float64(data[x0, y0, z1, c])
                    c010 = np.float64(data[x0, y1, z0, c])
                    c011 = np.float64(data[x0, y1, z1, c])
                    c100 = np.float64(data[x1, y0, z0, c])
                    c101 = np.float64(data[x1, y0, z1, c])
                    c110 = np.float64(data[x1, y1, z0, c])
                    c111 = np.float64(data[x1, y1, z1, c])
                    c00 = c000 + (c001 - c000) * tz
                    c01 = c010 + (c011 - c010) * tz
                    c10 = c100 + (c101 - c100) * tz
                    c11 = c110 + (c111 - c110) * tz
                    c0 = c00 + (c01 - c00) * ty
                    c1 = c10 + (c11 - c10) * ty
                    out[i, j, k, c] = c0 + (c1 - c0) * tx


def sample_axes(vol: Volume, ax, ay, az, policy: str = "clamp") -> np.ndarray:
    """Trilinear samples over a separable voxel-coordinate lattice.

    Equivalent to sampling the full outer-product point set but without
    materializing it; used on the grid-to-grid resampling paths.
    """
    ax, ay, az = (np.ascontiguousarray(np.asarray(a, dtype=np.float64).ravel())
                  for a in (ax, ay, az))
    for arr in (ax, ay, az):
        if not np.isfinite(arr).all():
            raise ValueError("sampling coordinates must be finite")
    out = np.empty((ax.size, ay.size, az.size, vol.channels), dtype=np.float32)
    _trilinear_axes_kernel(vol.data, ax, ay, az, _policy_code(policy), out)
    return out


def _pts2d(pts) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(pts, dtype=np.float64))
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"points must have shape (N, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("sampling coordinates must be finite")
    return arr


def sample_points(vol: Volume, pts, policy: str = "clamp") -> np.ndarray:
    """Trilinear samples of all channels at continuous voxel coordinates.

    Parameters
    ----------
    vol : Volume
    pts : (N, 3) array of voxel coordinates.
    policy : out-of-domain handling, "clamp" or "zero".

    Returns
    -------
    (N, channels) float32 array.
    """
    arr = _pts2d(pts)
    out = np.empty((arr.shape[0], vol.channels), dtype=np.float32)
    _trilinear_kernel(vol.data, arr, _policy_code(policy), out)
    return out


def trilinear_sample(vol: Volume, p, policy: str = "clamp") -> np.ndarray:
    """Trilinear interpolant at one continuous voxel coordinate, per channel."""
    return sample_points(vol, np.asarray(p, dtype=np.float64), policy)[0]


def nearest_points(labels: LabelVolume, pts, policy: str = "clamp") -> np.ndarray:
    """Nearest-node labels at continuous voxel coordinates; never invents labels."""
    arr = _pts2d(pts)
    out = np.empty(arr.shape[0], dtype=labels.labels.dtype)
    _nearest_kernel(labels.labels, arr, _policy_code(policy), labels.labels.dtype.type(0), out)
    return out


def nearest_sample(labels: LabelVolume, p, policy: str = "clamp") -> int:
    """Label of the lattice node nearest to p (ties toward the lower index)."""
    return int(nearest_points(labels, np.asarray(p, dtype=np.float64), policy)[0])


def _source_coords(source: VoxelGrid, target: VoxelGrid) -> np.ndarray:
    """Continuous source-voxel coordinates of every target voxel, via world space."""
    return source.world_to_voxel(target.world_grid())


def _axis_coords(source: VoxelGrid, target: VoxelGrid):
    """Per-axis source voxel coordinates; valid when the grids share orientation."""
    delta = (np.asarray(target.origin) - np.asarray(source.origin)) @ source.orientation
    return [
        (np.arange(d, dtype=np.float64) * st + dl) / ss
        for d, st, ss, dl in zip(target.dims, target.spacing, source.spacing, delta)
    ]


def resample(vol: Volume, target: VoxelGrid, mode: str = "trilinear",
             policy: str = "clamp") -> Volume:
    """Pull a volume onto a new grid through world-space alignment."""
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown resample mode {mode!r}")
    if vol.grid.approx_equal(target, tol=1e-12):
        return Volume(target, vol.data)
    if mode == "trilinear" and np.allclose(vol.grid.orientation, target.orientation,
                                           atol=1e-12):
        # aligned grids: the coordinate map is separable, skip the point cloud
        ax, ay, az = _axis_coords(vol.grid, target)
        return Volume(target, sample_axes(vol, ax, ay, az, policy))
    pts = _source_coords(vol.grid, target)
    if mode == "trilinear":
        out = sample_points(vol, pts, policy)
    else:
        out = np.empty((pts.shape[0], vol.channels), dtype=np.float32)
        code = _policy_code(policy)
        for c in range(vol.channels):
            chan = np.ascontiguousarray(vol.data[..., c])
            _nearest_kernel(chan, pts, code, np.float32(0.0), out[:, c])
    return Volume(target, out.reshape(target.dims + (vol.channels,)))


def resample_labels(labels: LabelVolume, target: VoxelGrid, policy: str = "clamp") -> LabelVolume:
    """Nearest-neighbor label resampling onto a new grid."""
    if labels.grid.approx_equal(target, tol=1e-12):
        return LabelVolume(target, labels.labels)
    pts = _source_coords(labels.grid, target)
    out = nearest_points(labels, pts, policy)
    return LabelVolume(target, out.reshape(target.dims))


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian, truncated at +/- 4 sigma (in samples)."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_blur(vol: Volume, sigma) -> Volume:
    """Separable Gaussian blur with per-axis sigma in voxels.

    sigma = 0 on an axis leaves that axis untouched; edge handling is
    clamp-to-edge, so constant volumes pass through unchanged.
    """
    sig = [float(s) for s in np.atleast_1d(np.asarray(sigma, dtype=np.float64)).ravel()]
    if len(sig) == 1:
        sig = sig * 3
    if len(sig) != 3:
        raise ValueError(f"sigma must be a scalar or 3 values, got {sigma!r}")
    if any(s < 0 or not np.isfinite(s) for s in sig):
        raise ValueError(f"sigma must be finite and >= 0, got {sig}")
    if all(s == 0.0 for s in sig):
        return vol
    data = vol.data.astype(np.float64)
    for axis, s in enumerate(sig):
        if s > 0.0:
            data = correlate1d(data, gaussian_kernel_1d(s), axis=axis, mode="nearest")
    return Volume(vol.grid, data.astype(np.float32))
