"""Random diffeomorphic deformations: affine + stationary velocity field.

A deformation is the composition of a random affine map and the
exponential of a smooth random stationary velocity field (SVF), stored as
a dense pull-back map: each output voxel carries the world coordinate it
samples from.  SVF exponentials are computed by scaling and squaring,
which keeps the map smooth and invertible for sane amplitude/spacing
choices; ``jacobian_determinant`` is the diagnostic that certifies it.

Conventions fixed here and relied on everywhere else:

* pull-back (target-to-source) fields; one interpolation per warp,
* affine factor order translate . rotZ . rotY . rotX . shear . scale,
  applied about the volume's world-space center,
* displacement vectors are world mm.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Volume, VoxelGrid
from .errors import ConfigError
import numba

from .sampling import nearest_points, sample_axes, sample_points


@numba.njit(cache=True, parallel=True, nogil=True)
def _squaring_step(u, out):  # pragma: no cover - jitted
    """One scaling-and-squaring composition: out(x) = u(x) + u(x + u(x)).

    u is a (nx, ny, nz, 3) voxel-unit displacement field; the self-sample
    is trilinear with clamp-to-edge, evaluated in float64 per voxel.
    """
    nx, ny, nz, _ = u.shape
    for i in numba.prange(nx):
        for j in range(ny):
            for k in range(nz):
                x = i + np.float64(u[i, j, k, 0])
                y = j + np.float64(u[i, j, k, 1])
                z = k + np.float64(u[i, j, k, 2])
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
                for c in range(3):
                    c000 = np.float64(u[x0, y0, z0, c])
                    c001 = np.float64(u[x0, y0, z1, c])
                    c010 = np.float64(u[x0, y1, z0, c])
                    c011 = np.float64(u[x0, y1, z1, c])
                    c100 = np.float64(u[x1, y0, z0, c])
                    c101 = np.float64(u[x1, y0, z1, c])
                    c110 = np.float64(u[x1, y1, z0, c])
                    c111 = np.float64(u[x1, y1, z1, c])
                    c00 = c000 + (c001 - c000) * tz
                    c01 = c010 + (c011 - c010) * tz
                    c10 = c100 + (c101 - c100) * tz
                    c11 = c110 + (c111 - c110) * tz
                    c0 = c00 + (c01 - c00) * ty
                    c1 = c10 + (c11 - c10) * ty
                    out[i, j, k, c] = u[i, j, k, c] + (c0 + (c1 - c0) * tx)


@dataclass(frozen=True)
class AffineParams:
    """Rotation (deg), scaling, shearing, translation (mm); 12 scalars."""

    rotation: tuple = (0.0, 0.0, 0.0)
    scaling: tuple = (1.0, 1.0, 1.0)
    shearing: tuple = (0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("rotation", "scaling", "shearing", "translation"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be 3 finite values, got {vals}")
            object.__setattr__(self, name, vals)
        if any(s <= 0 for s in self.scaling):
            raise ValueError(f"scaling factors must be > 0, got {self.scaling}")

    def matrix(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Compose the 4x4 world-space matrix about ``center``."""
        rx, ry, rz = (math.radians(a) for a in self.rotation)
        rot_x = np.array([[1, 0, 0], [0, math.cos(rx), -math.sin(rx)], [0, math.sin(rx), math.cos(rx)]])
        rot_y = np.array([[math.cos(ry), 0, math.sin(ry)], [0, 1, 0], [-math.sin(ry), 0, math.cos(ry)]])
        rot_z = np.array([[math.cos(rz), -math.sin(rz), 0], [math.sin(rz), math.cos(rz), 0], [0, 0, 1]])
        shear = np.array([[1.0, self.shearing[0], self.shearing[1]],
                          [0.0, 1.0, self.shearing[2]],
                          [0.0, 0.0, 1.0]])
        linear = rot_z @ rot_y @ rot_x @ shear @ np.diag(self.scaling)
        mat = np.eye(4)
        mat[:3, :3] = linear
        center = np.asarray(center, dtype=np.float64)
        mat[:3, 3] = np.asarray(self.translation) + center - linear @ center
        if abs(np.linalg.det(mat)) <= 1e-9:
            raise ValueError("affine matrix is numerically singular")
        return mat

    def to_dict(self) -> dict:
        return {"rotation": list(self.rotation), "scaling": list(self.scaling),
                "shearing": list(self.shearing), "translation": list(self.translation)}


@dataclass(frozen=True)
class VelocityField:
    """Smooth random velocity field (world mm per unit flow time)."""

    vectors: Volume
    control_spacing: float
    amplitude: float

    @property
    def grid(self) -> VoxelGrid:
        return self.vectors.grid


@dataclass(frozen=True)
class DeformationField:
    """Dense pull-back map: coords[x] = source world position sampled by voxel x."""

    grid: VoxelGrid
    coords: Volume
    provenance: dict = field(default_factory=dict)

    def coords_flat(self) -> np.ndarray:
        return self.coords.data.reshape(-1, 3)


def _check_range(name, lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"{name}: invalid range [{lo}, {hi}]")


def sample_affine(rng: np.random.Generator, rotation=(0.0, 0.0), scaling=(1.0, 1.0),
                  shearing=(0.0, 0.0), translation=(0.0, 0.0)) -> AffineParams:
    """Draw affine parameters, each scalar uniform over its (lo, hi) range."""
    for name, rng_pair in (("rotation", rotation), ("scaling", scaling),
                           ("shearing", shearing), ("translation", translation)):
        _check_range(name, *rng_pair)
    if scaling[0] <= 0:
        raise ConfigError(f"scaling: range must be positive, got {scaling}")
    return AffineParams(
        rotation=tuple(rng.uniform(*rotation, size=3)),
        scaling=tuple(rng.uniform(*scaling, size=3)),
        shearing=tuple(rng.uniform(*shearing, size=3)),
        translation=tuple(rng.uniform(*translation, size=3)),
    )


def _coarse_lattice(grid: VoxelGrid, control_spacing: float):
    """Node counts and fine->coarse coordinate scale of the control lattice."""
    nodes = []
    scale = []
    for d, s in zip(grid.dims, grid.spacing):
        extent = (d - 1) * s
        nodes.append(max(2, int(math.floor(extent / control_spacing)) + 2))
        scale.append(s / control_spacing)
    return tuple(nodes), np.asarray(scale)


def coarse_gaussian_field(rng: np.random.Generator, grid: VoxelGrid,
                          control_spacing: float, channels: int) -> np.ndarray:
    """Unit-variance Gaussian noise on a coarse lattice, trilinearly upsampled.

    Shared machinery of the velocity field and the bias log-field; the
    result is smooth with a slope bound of (2 * max|node|) / control_spacing.
    """
    if control_spacing < 2.0 * max(grid.spacing):
        raise ConfigError(
            f"control_spacing {control_spacing} must be >= twice the voxel "
            f"spacing {tuple(grid.spacing)}"
        )
    nodes, scale = _coarse_lattice(grid, control_spacing)
    draw = rng.standard_normal(size=nodes + (channels,))
    coarse = Volume(VoxelGrid(dims=nodes), draw)
    axes = [np.arange(d, dtype=np.float64) * s for d, s in zip(grid.dims, scale)]
    return sample_axes(coarse, *axes)


def sample_svf(rng: np.random.Generator, grid: VoxelGrid, control_spacing: float,
               amplitude: float) -> VelocityField:
    """Draw a smooth velocity field whose maximum magnitude equals ``amplitude`` mm."""
    if amplitude < 0:
        raise ConfigError(f"svf amplitude must be >= 0, got {amplitude}")
    raw = coarse_gaussian_field(rng, grid, control_spacing, 3)
    if amplitude == 0.0:
        vectors = np.zeros(grid.dims + (3,), dtype=np.float32)
    else:
        mag = np.sqrt((raw.astype(np.float64) ** 2).sum(axis=3))
        peak = mag.max()
        vectors = raw * (amplitude / peak) if peak > 0 else np.zeros_like(raw)
    return VelocityField(Volume(grid, vectors), float(control_spacing), float(amplitude))


def integrate_svf(velocity: VelocityField, steps: int = 7) -> Volume:
    """Exponentiate a stationary velocity field by scaling and squaring.

    The field is halved ``steps`` times, then the small displacement is
    composed with itself ``steps`` times (trilinear self-sampling), giving
    x -> x + u(x) ~ exp(v).  Returns the displacement in world mm.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    grid = velocity.grid
    spacing = np.asarray(grid.spacing)
    rot = grid.orientation
    # flow in voxel units; orientation maps world vectors onto the lattice
    v_vox = (velocity.vectors.data.reshape(-1, 3).astype(np.float64) @ rot) / spacing
    u = np.ascontiguousarray((v_vox * (0.5 ** steps)).astype(np.float32)
                             .reshape(grid.dims + (3,)))
    buf = np.empty_like(u)
    for _ in range(steps):
        _squaring_step(u, buf)
        u, buf = buf, u
    u_mm = (u.reshape(-1, 3).astype(np.float64) * spacing) @ rot.T
    return Volume(grid, u_mm.reshape(grid.dims + (3,)).astype(np.float32))


def identity_displacement(grid: VoxelGrid) -> Volume:
    return Volume(grid, np.zeros(grid.dims + (3,), dtype=np.float32))


def compose(displacement: Volume, affine: AffineParams, grid: VoxelGrid,
            provenance: dict | None = None) -> DeformationField:
    """Build the pull-back field coords(x) = A(world(x) + u(x))."""
    if displacement.grid.dims != grid.dims or displacement.channels != 3:
        raise ConfigError("displacement must be a 3-channel volume on the target grid")
    center = grid.voxel_to_world((np.asarray(grid.dims, dtype=np.float64) - 1.0) / 2.0)
    mat = affine.matrix(center)
    pts = grid.world_grid() + displacement.data.reshape(-1, 3)
    coords = pts @ mat[:3, :3].T + mat[:3, 3]
    prov = dict(provenance or {})
    prov.setdefault("affine", affine.to_dict())
    return DeformationField(grid, Volume(grid, coords.reshape(grid.dims + (3,))), prov)


def warp_image_at(vol: Volume, pts_vox: np.ndarray, grid: VoxelGrid,
                  policy: str = "clamp") -> Volume:
    """Warp onto ``grid`` given precomputed source voxel coordinates."""
    out = sample_points(vol, pts_vox, policy)
    return Volume(grid, out.reshape(grid.dims + (vol.channels,)))


def warp_image(vol: Volume, phi: DeformationField, policy: str = "clamp") -> Volume:
    """Pull-back warp of a scalar or vector volume; one trilinear pass."""
    return warp_image_at(vol, vol.grid.world_to_voxel(phi.coords_flat()), phi.grid, policy)


def warp_labels_at(labels, pts_vox: np.ndarray, grid: VoxelGrid, policy: str = "clamp"):
    """Nearest-neighbor warp onto ``grid`` given precomputed source coordinates."""
    from .core import LabelVolume

    out = nearest_points(labels, pts_vox, policy)
    return LabelVolume(grid, out.reshape(grid.dims))


def warp_labels(labels, phi: DeformationField, policy: str = "clamp"):
    """Nearest-neighbor pull-back of a label map; never invents labels."""
    return warp_labels_at(labels, labels.grid.world_to_voxel(phi.coords_flat()),
                          phi.grid, policy)


def jacobian_determinant(phi: DeformationField) -> Volume:
    """Determinant of d(source world)/d(target world), per voxel.

    Central differences on the interior, one-sided at the boundary, so
    the diagnostic is total.  Positive everywhere = orientation-preserving.
    """
    grid = phi.grid
    coords = phi.coords.data.astype(np.float64)
    jac = np.empty(grid.dims + (3, 3), dtype=np.float64)
    for a in range(3):
        if grid.dims[a] > 1:
            grad = np.gradient(coords, axis=a)
        else:
            grad = np.zeros_like(coords)
        jac[..., :, a] = grad
    det_index = np.linalg.det(jac)
    det_ref = np.linalg.det(grid.orientation * np.asarray(grid.spacing))
    return Volume(grid, (det_index / det_ref).astype(np.float32))
