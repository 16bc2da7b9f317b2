import math

import numpy as np
import pytest
from conftest import empty_grid, put, wall
from hypothesis import given
from hypothesis import strategies as st

from visia.geom import CameraConfig, FrustumParams, make_frustum, to_camera_frame
from visia.world import (
    OBSTACLE,
    TARGET,
    HiddenObstacle,
    LabelConflict,
    SurfaceModel,
    VoxelGrid,
    clearance_many,
    local_voxels,
    min_clearance,
    obstacle_in_frustum,
    raycast,
    reveal,
    unblocked,
    voxels_in_frustum,
)


def segment_hits_box(a, b, lo, hi):
    """Length of the part of segment ab inside the box [lo, hi] (slab method)."""
    d = b - a
    t0, t1 = 0.0, 1.0
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if a[k] < lo[k] or a[k] > hi[k]:
                return 0.0
            continue
        u, v = (lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]
        t0, t1 = max(t0, min(u, v)), min(t1, max(u, v))
    return max(0.0, t1 - t0) * float(np.linalg.norm(d))


def brute_blocked(grid, a, b, skip_end=False):
    """Segment/box test against every occupied voxel; returns (blocked, ambiguous)."""
    idx = grid.voxel_indices("any")
    end = grid.index_of(b)
    blocked, ambiguous = False, False
    for v in idx:
        if skip_end and end is not None and tuple(v) == end:
            continue
        lo = grid.origin + v * grid.resolution
        chord = segment_hits_box(a, b, lo, lo + grid.resolution)
        if chord > 1e-7:
            blocked = True
        elif chord > 0.0:
            ambiguous = True
    return blocked, ambiguous


# -- grid -----------------------------------------------------------------------


def test_grid_shape_and_index():
    g = VoxelGrid(0.5, (0, 0, 0), (2, 3, 1))
    assert g.shape == (4, 6, 2)
    assert g.index_of((0.1, 2.9, 0.6)) == (0, 5, 1)
    assert g.index_of((-0.1, 0, 0)) is None


def test_relabel_conflict():
    g = empty_grid()
    put(g, (1, 1, 1), TARGET)
    with pytest.raises(LabelConflict):
        put(g, (1, 1, 1), OBSTACLE)


def test_version_bumps_only_on_change():
    g = empty_grid()
    put(g, (1, 1, 1))
    v = g.version
    put(g, (1, 1, 1))
    assert g.version == v


def test_centers_are_c_contiguous():
    g = empty_grid()
    put(g, [(1, 1, 1), (1, 1.3, 1)])
    assert g.centers("obstacle").flags.c_contiguous


# -- raycast --------------------------------------------------------------------


def test_raycast_empty():
    assert not raycast(empty_grid(), (1, 1, 1), (8, 8, 3)).blocked


def test_raycast_midpoint_obstacle():
    g = empty_grid()
    put(g, (5.1, 5.1, 2.1))
    hit = raycast(g, (1.1, 1.1, 1.1), (9.1, 9.1, 3.1))
    assert hit.blocked
    assert hit.hit_label == "obstacle"


def test_raycast_skips_own_voxel():
    g = empty_grid()
    put(g, (5.1, 5.1, 2.1), TARGET)
    assert not raycast(g, (1.1, 1.1, 1.1), (5.1, 5.1, 2.1), skip_end=True).blocked
    assert raycast(g, (1.1, 1.1, 1.1), (5.1, 5.1, 2.1)).blocked


def test_raycast_blocker_filter():
    g = empty_grid()
    put(g, (5.1, 5.1, 2.1), TARGET)
    assert not raycast(g, (1.1, 1.1, 1.1), (9.1, 9.1, 3.1), blockers="obstacle").blocked


def _random_grid(rng, n=25):
    g = VoxelGrid(0.5, (0, 0, 0), (6, 6, 3))
    idx = np.column_stack([rng.integers(0, s, n) for s in g.shape])
    g.set_labels(idx, OBSTACLE)
    return g


@given(st.integers(0, 2**31))
def test_raycast_matches_box_oracle(seed):
    rng = np.random.default_rng(seed)
    g = _random_grid(rng)
    free = np.argwhere(g.codes == 0)
    a, b = g.center_of(free[rng.integers(len(free), size=2)]) + rng.uniform(-0.2, 0.2, (2, 3))
    blocked, ambiguous = brute_blocked(g, a, b)
    if ambiguous:
        return
    assert raycast(g, a, b).blocked == blocked


@given(st.integers(0, 2**31))
def test_raycast_symmetric(seed):
    rng = np.random.default_rng(seed)
    g = _random_grid(rng)
    free = np.argwhere(g.codes == 0)
    a, b = g.center_of(free[rng.integers(len(free), size=2)]) + rng.uniform(-0.2, 0.2, (2, 3))
    if brute_blocked(g, a, b)[1]:
        return
    assert raycast(g, a, b).blocked == raycast(g, b, a).blocked


def test_unblocked_matches_raycast():
    rng = np.random.default_rng(4)
    g = _random_grid(rng, 40)
    start = np.array([0.3, 0.3, 0.3])
    g.codes[0, 0, 0] = 0
    ends = rng.uniform(0.1, 2.9, size=(50, 3)) * [2, 2, 1]
    mask = unblocked(g, start, ends, skip_end=True)
    ref = [not raycast(g, start, e, skip_end=True).blocked for e in ends]
    assert list(mask) == ref


# -- clearance --------------------------------------------------------------------


def test_clearance_empty_is_inf():
    assert min_clearance(empty_grid(), (1, 1, 1)) == math.inf


def test_clearance_single_voxel():
    g = VoxelGrid(0.1, (0, 0, 0), (3, 3, 3))
    put(g, (1.05, 1.05, 1.05))
    expect = 1.0 - 0.5 * math.sqrt(3) * 0.1
    assert math.isclose(min_clearance(g, (2.05, 1.05, 1.05)), expect, abs_tol=1e-12)
    assert math.isclose(expect, 0.9134, abs_tol=1e-4)


def test_clearance_inside_voxel_zero():
    g = empty_grid()
    put(g, (1.1, 1.1, 1.1))
    assert min_clearance(g, (1.1, 1.1, 1.1)) == 0.0


@given(st.integers(0, 2**31))
def test_clearance_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = _random_grid(rng, 15)
    pts = rng.uniform(0, 6, size=(20, 3)) * [1, 1, 0.5]
    c = g.centers("any")
    ref = np.maximum(
        np.min(np.linalg.norm(pts[:, None] - c[None], axis=2), axis=1) - 0.5 * math.sqrt(3) * 0.5, 0
    )
    assert np.allclose(clearance_many(g, pts), ref, atol=1e-12)


# -- frustum queries ---------------------------------------------------------------


def test_frustum_empty_grid():
    hs = make_frustum(CameraConfig((1, 1, 1), 0, 0), FrustumParams.from_degrees(80, 65, 7))
    assert len(voxels_in_frustum(empty_grid(), hs)) == 0


def test_frustum_axis_voxel():
    g = empty_grid()
    idx = put(g, (4.6, 1.1, 1.1))
    q = CameraConfig(tuple(g.center_of(idx[0]) - [3.5, 0, 0]), 0, 0)
    got = voxels_in_frustum(g, make_frustum(q, FrustumParams.from_degrees(80, 65, 7)))
    assert np.allclose(got, [g.center_of(idx[0])])


@given(st.integers(0, 2**31))
def test_frustum_query_matches_bearing_filter(seed):
    rng = np.random.default_rng(seed)
    g = _random_grid(rng, 60)
    fp = FrustumParams.from_degrees(rng.uniform(30, 120), rng.uniform(30, 120), rng.uniform(1, 6))
    q = CameraConfig(tuple(rng.uniform(0, 6, 3) * [1, 1, 0.5]), rng.uniform(-1.2, 0.5), rng.uniform(-3, 3))
    c = g.centers("obstacle")
    r = to_camera_frame(q, c)
    ok = (
        (r[:, 0] > 0)
        & (r[:, 0] <= fp.r_max)
        & (np.abs(np.arctan2(r[:, 1], r[:, 0])) <= fp.alpha_h / 2)
        & (np.abs(np.arctan2(r[:, 2], r[:, 0])) <= fp.alpha_v / 2)
    )
    hs = make_frustum(q, fp)
    got = voxels_in_frustum(g, hs)
    assert {tuple(x) for x in got} == {tuple(x) for x in c[ok]}
    assert obstacle_in_frustum(g, hs) == bool(ok.any())


def test_local_voxels_radius():
    g = empty_grid()
    put(g, [(2.1, 1.1, 1.1), (3.1, 1.1, 1.1), (4.1, 1.1, 1.1)])
    q = CameraConfig((1.1, 1.1, 1.1), 0, 0)
    got = local_voxels(g, q, 2.5)
    assert len(got) == 2
    assert got[0][0] < got[1][0]


def test_local_voxels_empty():
    g = empty_grid()
    put(g, (9.1, 9.1, 3.1))
    assert len(local_voxels(g, CameraConfig((1, 1, 1), 0, 0), 2.0)) == 0


def test_local_voxels_cap_keeps_nearest():
    rng = np.random.default_rng(9)
    g = VoxelGrid(0.1, (0, 0, 0), (4, 4, 4))
    idx = rng.choice(40 * 40 * 40, size=100, replace=False)
    g.set_labels(np.column_stack(np.unravel_index(idx, g.shape)), OBSTACLE)
    q = CameraConfig((2, 2, 2), 0, 0)
    got = local_voxels(g, q, 10.0, cap=64)
    c = g.centers("obstacle")
    d = np.linalg.norm(c - q.position, axis=1)
    ref = c[np.argsort(d, kind="stable")[:64]]
    assert len(got) == 64
    assert np.allclose(np.sort(np.linalg.norm(got - q.position, axis=1)), np.sort(d)[:64])
    assert {tuple(x) for x in got} == {tuple(x) for x in ref}


# -- reveal ----------------------------------------------------------------------


def _box_voxels(g, lo, hi):
    pts = np.array(
        [(x, y, z) for x in np.arange(lo[0], hi[0], 0.25) for y in np.arange(lo[1], hi[1], 0.25)
         for z in np.arange(lo[2], hi[2], 0.25)]
    ) + 0.125
    return np.unique(g.indices_of(pts), axis=0)


def test_reveal_out_of_range():
    g = VoxelGrid(0.25, (0, 0, 0), (30, 4, 4))
    ob = HiddenObstacle("a", _box_voxels(g, (21, 1, 1), (22, 2, 2)), "distance", 15.0)
    assert reveal(g, (0.6, 1.6, 1.6), [ob]) == 0


def test_reveal_clear_line():
    g = VoxelGrid(0.25, (0, 0, 0), (30, 4, 4))
    ob = HiddenObstacle("a", _box_voxels(g, (5, 1, 1), (6, 2, 2)), "distance", 15.0)
    n = reveal(g, (0.6, 1.6, 1.6), [ob])
    assert n == len(ob.indices)
    assert ob.revealed.all()


def test_reveal_behind_wall():
    g = VoxelGrid(0.25, (0, 0, 0), (30, 4, 4))
    wall(g, 3.1, 0, 4, 0, 4, OBSTACLE)
    ob = HiddenObstacle("a", _box_voxels(g, (5, 1, 1), (6, 2, 2)), "distance", 15.0)
    assert reveal(g, (0.6, 1.6, 1.6), [ob]) == 0


def test_reveal_matches_per_voxel_raycast():
    g = VoxelGrid(0.25, (0, 0, 0), (10, 10, 3))
    wall(g, 4.1, 3, 6, 0, 3, OBSTACLE)
    ob = HiddenObstacle("a", _box_voxels(g, (6, 2, 0), (7.5, 8, 2)), "distance", 15.0)
    sensor = np.array([1.37, 4.61, 1.43])
    before = g.copy()
    reveal(g, sensor, [ob])
    # the object's own voxels never hide each other, so only the wall counts
    others = before.voxel_indices("any")
    for v, got in zip(ob.indices, ob.revealed):
        end = before.center_of(v)
        chords = [segment_hits_box(sensor, end, before.origin + u * 0.25, before.origin + (u + 1) * 0.25) for u in others]
        if any(0.0 < c <= 1e-7 for c in chords):
            continue
        assert got == (max(chords) <= 1e-7)
    assert 0 < ob.revealed.sum() < len(ob.indices)


def test_reveal_monotone_and_deterministic():
    def run():
        g = VoxelGrid(0.25, (0, 0, 0), (20, 6, 3))
        obs = [
            HiddenObstacle(f"o{i}", _box_voxels(g, (3 + 4 * i, 2, 0), (4 + 4 * i, 3, 2)), "distance", 5.0)
            for i in range(4)
        ]
        counts, snapshots = [], []
        for x in np.linspace(0.5, 19.5, 40):
            reveal(g, (x, 0.6, 1.5), obs)
            counts.append(int(np.count_nonzero(g.codes == OBSTACLE)))
            snapshots.append(g.codes.copy())
        return counts, snapshots

    c1, s1 = run()
    c2, s2 = run()
    assert all(b >= a for a, b in zip(c1, c1[1:]))
    assert c1[-1] > 0
    assert all(np.array_equal(a, b) for a, b in zip(s1, s2))


def test_surface_elements_face_outward():
    g = empty_grid()
    wall(g, 5.1, 2, 4, 0, 2, TARGET)
    s = SurfaceModel.from_grid(g)
    assert len(s) == 8 * 8
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1.0)
