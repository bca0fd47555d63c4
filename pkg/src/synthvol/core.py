"""Volume containers and world-space geometry.

A VoxelGrid places a dense lattice in scanner space: voxel index ``i``
(0-based, per axis) sits at world position ``origin + orientation @ (i * spacing)``.
Volumes store float32 voxel data with an explicit channel axis; label maps
store int32 region ids.  All containers are immutable after construction
(backing arrays are marked read-only), which is what makes every operation
in this package safe to call from many threads at once.

Array memory layout is C-order with the channel axis last, i.e. channels
are the fastest-varying axis; this is fixed and relied on by the sampling
kernels.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_ORTHO_TOL = 1e-6


def _as_tuple3(value, kind, name):
    arr = np.asarray(value)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have exactly 3 entries, got shape {arr.shape}")
    return tuple(kind(v) for v in arr)


@dataclass(frozen=True)
class VoxelGrid:
    """Geometry of a voxel lattice: shape, spacing (mm), origin (mm), orientation."""

    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_tuple3(self.dims, int, "dims"))
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing, float, "spacing"))
        object.__setattr__(self, "origin", _as_tuple3(self.origin, float, "origin"))
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must all be >= 1, got {self.dims}")
        if any(not np.isfinite(s) or s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must all be finite and > 0, got {self.spacing}")
        if any(not np.isfinite(o) for o in self.origin):
            raise ValueError(f"origin must be finite, got {self.origin}")
        rot = np.asarray(self.orientation, dtype=np.float64)
        if rot.shape != (3, 3) or not np.isfinite(rot).all():
            raise ValueError("orientation must be a finite 3x3 matrix")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("orientation columns must be orthonormal to 1e-6")
        rot = rot.copy()
        rot.flags.writeable = False
        object.__setattr__(self, "orientation", rot)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def affine(self) -> np.ndarray:
        """4x4 voxel-index-to-world matrix."""
        mat = np.eye(4)
        mat[:3, :3] = self.orientation * np.asarray(self.spacing)
        mat[:3, 3] = self.origin
        return mat

    def voxel_to_world(self, pts: np.ndarray) -> np.ndarray:
        """Map (..., 3) voxel coordinates to world mm."""
        pts = np.asarray(pts, dtype=np.float64)
        return pts * np.asarray(self.spacing) @ self.orientation.T + np.asarray(self.origin)

    def world_to_voxel(self, pts: np.ndarray) -> np.ndarray:
        """Map (..., 3) world-mm positions to continuous voxel coordinates."""
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - np.asarray(self.origin)) @ self.orientation / np.asarray(self.spacing)

    def index_grid(self) -> np.ndarray:
        """All voxel indices as an (n_voxels, 3) float64 array, C-order."""
        ii, jj, kk = np.meshgrid(
            np.arange(self.dims[0], dtype=np.float64),
            np.arange(self.dims[1], dtype=np.float64),
            np.arange(self.dims[2], dtype=np.float64),
            indexing="ij",
        )
        return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)

    def world_grid(self) -> np.ndarray:
        """World coordinates of every voxel, shape (n_voxels, 3)."""
        return self.voxel_to_world(self.index_grid())

    def approx_equal(self, other: "VoxelGrid", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.orientation, other.orientation, atol=tol)
        )

    def world_bounds(self):
        """(lo, hi) world-space corners of the axis-aligned lattice bounding box."""
        corners = np.array(
            [[i * (self.dims[0] - 1), j * (self.dims[1] - 1), k * (self.dims[2] - 1)]
             for i in (0, 1) for j in (0, 1) for k in (0, 1)],
            dtype=np.float64,
        )
        world = self.voxel_to_world(corners)
        return world.min(axis=0), world.max(axis=0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Volume:
    """Dense float32 scalar or vector field over a VoxelGrid.

    ``data`` always has shape ``dims + (channels,)``.  Values are finite;
    construction rejects NaN/Inf so downstream code never has to re-check.
    """

    grid: VoxelGrid
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 3:
            arr = arr[..., np.newaxis]
        if arr.ndim != 4:
            raise ShapeError(f"volume data must be 3D or 4D, got ndim={arr.ndim}")
        if arr.shape[:3] != self.grid.dims:
            raise ShapeError(f"data shape {arr.shape[:3]} does not match grid dims {self.grid.dims}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ValueError("volume data contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def scalars(self) -> np.ndarray:
        """The single channel of a scalar volume, shape ``dims``."""
        if self.channels != 1:
            raise ShapeError(f"volume has {self.channels} channels, expected 1")
        return self.data[..., 0]

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(self.grid, data)


@dataclass(frozen=True)
class LabelVolume:
    """Integer label map over a VoxelGrid; label 0 is reserved for background."""

    grid: VoxelGrid
    labels: np.ndarray
    label_set: tuple = None

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.shape != self.grid.dims:
            raise ShapeError(f"label shape {arr.shape} does not match grid dims {self.grid.dims}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integer-typed, got {arr.dtype}")
        if arr.size and arr.min() < 0:
            raise ValueError("labels must be non-negative")
        arr = np.ascontiguousarray(arr.astype(np.int32))
        object.__setattr__(self, "labels", _freeze(arr))
        object.__setattr__(self, "label_set", tuple(int(v) for v in np.unique(arr)))

    def foreground_mask(self) -> np.ndarray:
        return self.labels != 0
