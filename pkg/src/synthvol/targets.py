"""Ground-truth supervision targets derived from one subject and one deformation.

Five target families: the warped label map, warped real modalities (the
synthesis targets), boundary distance maps, voxelwise atlas coordinates,
and the applied multiplicative bias field.  Everything in a TargetSet is
built from the same deformation draw, so replaying the recorded seeds
reproduces each member bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import LabelVolume, Volume
from .deform import DeformationField, warp_image_at, warp_labels_at
from .edt import signed_boundary_distance
from .errors import DomainError, ShapeError

MODALITIES = ("t1w", "t2w", "flair", "ct")


@dataclass(frozen=True)
class Subject:
    """One training subject: label map plus any co-registered real modalities."""

    id: str
    labels: LabelVolume
    reals: dict = field(default_factory=dict)
    atlas_transform: np.ndarray | None = None

    def __post_init__(self):
        for name, vol in self.reals.items():
            if vol.grid.dims != self.labels.grid.dims:
                raise ShapeError(f"subject {self.id}: modality {name} grid {vol.grid.dims} "
                                 f"does not match labels grid {self.labels.grid.dims}")
        if self.atlas_transform is not None:
            mat = np.asarray(self.atlas_transform, dtype=np.float64)
            if mat.shape != (4, 4) or not np.isfinite(mat).all():
                raise ValueError(f"subject {self.id}: atlas transform must be a finite 4x4 matrix")
            mat = mat.copy()
            mat.flags.writeable = False
            object.__setattr__(self, "atlas_transform", mat)


@dataclass(frozen=True)
class TargetSet:
    """All supervision targets for one generated sample, on the sample's grid."""

    seg: LabelVolume
    modality_targets: dict
    dist: dict
    atlas_coords: Volume
    bias_gt: Volume


def distance_map(labels: LabelVolume, foreground, signed: bool = False) -> Volume:
    """Exact Euclidean distance (mm) to the boundary of a label-set region.

    ``foreground`` is an iterable of label values forming the structure.
    Boundary voxels sit at distance 0; signed mode negates the interior.
    """
    fg_labels = sorted(int(v) for v in foreground)
    if not fg_labels:
        raise DomainError("foreground label set is empty")
    mask = np.isin(labels.labels, fg_labels)
    if not mask.any():
        raise DomainError(f"labels {fg_labels} not present in volume")
    dist = signed_boundary_distance(mask, labels.grid.spacing, signed=signed)
    return Volume(labels.grid, dist.astype(np.float32))


def atlas_bounds(grid, atlas_transform=None):
    """(lo, hi) of the grid's world bounding box mapped through the atlas transform."""
    lo, hi = grid.world_bounds()
    if atlas_transform is None:
        return lo, hi
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                        for z in (lo[2], hi[2])])
    mapped = corners @ np.asarray(atlas_transform)[:3, :3].T + np.asarray(atlas_transform)[:3, 3]
    return mapped.min(axis=0), mapped.max(axis=0)


def atlas_coordinate_target(phi: DeformationField, atlas_transform=None,
                            bounds=None) -> Volume:
    """Atlas coordinates of each voxel's source anatomy, normalized to [-1, 1]^3.

    ``bounds`` is the (lo, hi) atlas-space bounding box used for
    normalization; it defaults to the deformation grid's own box so an
    identity deformation yields the normalized world coordinates.
    """
    coords = phi.coords_flat().astype(np.float64)
    if atlas_transform is not None:
        mat = np.asarray(atlas_transform, dtype=np.float64)
        coords = coords @ mat[:3, :3].T + mat[:3, 3]
    if bounds is None:
        lo, hi = atlas_bounds(phi.grid, atlas_transform)
    else:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    normalized = 2.0 * (coords - lo) / span - 1.0
    return Volume(phi.grid, normalized.reshape(phi.grid.dims + (3,)).astype(np.float32))


def assemble_targets(subject: Subject, phi: DeformationField, bias_field: Volume,
                     structures: dict | None = None, signed_distance: bool = False,
                     policy: str = "clamp") -> TargetSet:
    """Warp the subject's labels and modalities by phi and derive all targets.

    ``structures`` maps a distance-map name to either the string
    "foreground" (all nonzero labels) or an explicit label list; structures
    whose labels are absent from the warped segmentation are skipped, and
    missing modalities are simply not present in the output (never
    zero-filled).  Distance maps are computed on the warped segmentation so
    they align voxelwise with the generated sample.
    """
    # labels and reals share one grid, so the source coordinates are shared too
    pts = subject.labels.grid.world_to_voxel(phi.coords_flat())
    seg = warp_labels_at(subject.labels, pts, phi.grid, policy=policy)
    modality_targets = {name: warp_image_at(vol, pts, phi.grid, policy=policy)
                        for name, vol in sorted(subject.reals.items())}
    if structures is None:
        structures = {"brain": "foreground"}
    dist = {}
    for name, spec in sorted(structures.items()):
        if isinstance(spec, str):
            if spec != "foreground":
                raise DomainError(f"unknown structure spec {spec!r} for {name}")
            fg = [lab for lab in seg.label_set if lab != 0]
        else:
            fg = [lab for lab in spec if lab in seg.label_set]
        if not fg:
            continue
        dist[name] = distance_map(seg, fg, signed=signed_distance)
    bounds = atlas_bounds(subject.labels.grid, subject.atlas_transform)
    coords = atlas_coordinate_target(phi, subject.atlas_transform, bounds=bounds)
    if bias_field.grid.dims != phi.grid.dims:
        raise ShapeError("bias field grid does not match the deformation grid")
    return TargetSet(seg=seg, modality_targets=modality_targets, dist=dist,
                     atlas_coords=coords, bias_gt=bias_field)
