"""Exact distance transform vs an O(n^2) brute-force oracle."""

import numpy as np
import pytest

from synthvol.core import LabelVolume
from synthvol.edt import boundary_seeds, signed_boundary_distance, squared_edt_from_seeds
from synthvol.errors import DomainError
from synthvol.targets import distance_map

from conftest import make_grid

# dyadic spacings keep every squared-distance term exact in float64, so the
# separable passes and the direct minimum agree bit for bit
DYADIC_SPACINGS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)


def brute_force_boundary(mask):
    """Re-stated boundary rule: foreground with any face neighbor background/outside."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(mask)
    dims = mask.shape
    for idx in np.argwhere(mask):
        x, y, z = idx
        for axis, delta in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
            n = idx.copy()
            n[axis] += delta
            if n[axis] < 0 or n[axis] >= dims[axis] or not mask[tuple(n)]:
                out[x, y, z] = True
                break
    return out


def brute_force_distance(mask, spacing, signed=False):
    """Direct min-over-seeds search, summing (dx*s)^2 + (dy*s)^2 + (dz*s)^2."""
    seeds = brute_force_boundary(mask)
    seed_idx = np.argwhere(seeds).astype(np.float64)
    dims = mask.shape
    sx, sy, sz = (float(s) for s in spacing)
    xs = np.arange(dims[0], dtype=np.float64)
    ys = np.arange(dims[1], dtype=np.float64)
    zs = np.arange(dims[2], dtype=np.float64)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    dx2 = ((pts[:, None, 0] - seed_idx[None, :, 0]) * sx) ** 2
    dy2 = ((pts[:, None, 1] - seed_idx[None, :, 1]) * sy) ** 2
    dz2 = ((pts[:, None, 2] - seed_idx[None, :, 2]) * sz) ** 2
    d2 = (dx2 + dy2) + dz2
    dist = np.sqrt(d2.min(axis=1)).reshape(dims)
    if signed:
        interior = mask & ~seeds
        dist = np.where(interior, -dist, dist)
    return dist


def random_mask(rng, dims, p=0.35):
    mask = rng.random(dims) < p
    if not mask.any():
        mask[tuple(d // 2 for d in dims)] = True
    return mask


class TestSeeds:
    def test_boundary_rule_matches_brute_force(self, rng):
        for _ in range(10):
            dims = tuple(rng.integers(3, 10, size=3))
            mask = random_mask(rng, dims)
            np.testing.assert_array_equal(boundary_seeds(mask), brute_force_boundary(mask))

    def test_full_volume_boundary_is_the_faces(self):
        mask = np.ones((4, 5, 6), dtype=bool)
        seeds = boundary_seeds(mask)
        interior = np.zeros_like(mask)
        interior[1:-1, 1:-1, 1:-1] = True
        np.testing.assert_array_equal(seeds, ~interior)


class TestExactness:
    def test_three_four_five(self):
        mask = np.zeros((8, 8, 8), dtype=bool)
        mask[0, 0, 0] = True
        dist = signed_boundary_distance(mask, (1.0, 1.0, 1.0))
        assert dist[3, 4, 0] == 5.0
        assert dist[0, 0, 0] == 0.0

    def test_all_foreground_five_cube(self):
        mask = np.ones((5, 5, 5), dtype=bool)
        got = signed_boundary_distance(mask, (1.0, 1.0, 1.0))
        want = brute_force_distance(mask, (1.0, 1.0, 1.0))
        np.testing.assert_array_equal(got, want)
        assert got[2, 2, 2] == 2.0  # cube center, two steps from the face shell

    def test_bitwise_match_random_masks_anisotropic(self):
        rng = np.random.default_rng(99)
        for trial in range(30):
            dims = tuple(int(d) for d in rng.integers(3, 17, size=3))
            spacing = tuple(rng.choice(DYADIC_SPACINGS, size=3))
            mask = random_mask(rng, dims)
            for signed in (False, True):
                got = signed_boundary_distance(mask, spacing, signed=signed)
                want = brute_force_distance(mask, spacing, signed=signed)
                np.testing.assert_array_equal(got, want)

    def test_lipschitz_in_world_metric(self, rng):
        mask = random_mask(rng, (12, 12, 12))
        spacing = (0.7, 1.3, 2.4)
        dist = np.abs(signed_boundary_distance(mask, spacing))
        for axis, s in enumerate(spacing):
            jump = np.abs(np.diff(dist, axis=axis))
            assert jump.max() <= s + 1e-9

    def test_empty_seed_mask_rejected(self):
        with pytest.raises(ValueError):
            squared_edt_from_seeds(np.zeros((3, 3, 3), dtype=bool), (1, 1, 1))


class TestDistanceMap:
    def test_label_selection_and_units(self):
        labels = np.zeros((8, 8, 8), dtype=np.int32)
        labels[0, 0, 0] = 7
        lab = LabelVolume(make_grid((8, 8, 8), spacing=(2.0, 2.0, 2.0)), labels)
        dist = distance_map(lab, foreground=[7])
        assert dist.data[3, 4, 0, 0] == 10.0  # 3-4-5 triangle at 2 mm spacing

    def test_signed_mode(self):
        labels = np.zeros((9, 9, 9), dtype=np.int32)
        labels[2:7, 2:7, 2:7] = 1
        lab = LabelVolume(make_grid((9, 9, 9)), labels)
        signed = distance_map(lab, foreground=[1], signed=True).data[..., 0]
        assert signed[4, 4, 4] < 0
        assert signed[2, 2, 2] == 0.0
        assert signed[0, 0, 0] > 0

    def test_empty_foreground_rejected(self, phantom):
        with pytest.raises(DomainError):
            distance_map(phantom, foreground=[])
        with pytest.raises(DomainError):
            distance_map(phantom, foreground=[99])
