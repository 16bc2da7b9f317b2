import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from visia.geom import (
    FAR,
    PITCH_MAX,
    PITCH_MIN,
    CameraConfig,
    FrustumParams,
    bearings,
    camera_axes,
    interp_attitude,
    make_frustum,
    point_in_frustum,
    shift_offsets,
    to_camera_frame,
    wrap_angle,
)

coord = st.floats(-20, 20, allow_nan=False)
pitch = st.floats(PITCH_MIN, PITCH_MAX)
yaw = st.floats(-math.pi, math.pi)


@st.composite
def configs(draw):
    return CameraConfig((draw(coord), draw(coord), draw(coord)), draw(pitch), draw(yaw))


@st.composite
def frusta(draw):
    return FrustumParams(
        math.radians(draw(st.floats(20, 150))),
        math.radians(draw(st.floats(20, 150))),
        draw(st.floats(0.5, 10)),
    )


def origin_cam():
    return CameraConfig((0, 0, 0), 0.0, 0.0)


# -- make_frustum / point_in_frustum ------------------------------------------


def test_axis_point_inside(square90):
    assert point_in_frustum(make_frustum(origin_cam(), square90), (1, 0, 0))


def test_behind_apex_outside(square90):
    assert not point_in_frustum(make_frustum(origin_cam(), square90), (-1, 0, 0))


def test_past_side_plane_outside(square90):
    assert not point_in_frustum(make_frustum(origin_cam(), square90), (1, 1.01, 0))


def test_far_plane_boundary(square90):
    hs = make_frustum(origin_cam(), square90)
    assert point_in_frustum(hs, (5 - 1e-9, 0, 0))
    assert not point_in_frustum(hs, (5 + 1e-9, 0, 0))


def test_apex_excluded(square90):
    assert not point_in_frustum(make_frustum(origin_cam(), square90), (0, 0, 0))


def test_far_bound_is_a_plane(square90):
    # a corner direction reaches past r_max along the ray, but not along the axis
    hs = make_frustum(origin_cam(), square90)
    assert point_in_frustum(hs, (4.9, 4.8, 4.8))


def test_camera_axes_orthonormal():
    R = camera_axes(0.3, -1.1)
    assert np.allclose(R.T @ R, np.eye(3))
    assert np.isclose(np.linalg.det(R), 1.0)


@given(configs(), frusta(), st.lists(st.tuples(coord, coord, coord), min_size=1, max_size=30))
def test_membership_matches_bearings(q, fp, pts):
    pts = np.asarray(pts, float)
    hs = make_frustum(q, fp)
    local = to_camera_frame(q, pts)
    for x, r in zip(pts, local):
        fwd = r[0]
        assume(abs(fwd) > 1e-6 and abs(fwd - fp.r_max) > 1e-6)
        bh, bv = math.atan2(r[1], fwd), math.atan2(r[2], fwd)
        assume(abs(abs(bh) - fp.alpha_h / 2) > 1e-6 and abs(abs(bv) - fp.alpha_v / 2) > 1e-6)
        expect = abs(bh) <= fp.alpha_h / 2 and abs(bv) <= fp.alpha_v / 2 and 0 < fwd <= fp.r_max
        assert point_in_frustum(hs, x) == expect


@given(configs(), frusta(), st.lists(st.tuples(coord, coord, coord), min_size=1, max_size=30))
def test_points_behind_camera_excluded(q, fp, pts):
    pts = np.asarray(pts, float)
    fwd = to_camera_frame(q, pts)[:, 0]
    inside = make_frustum(q, fp).contains(pts)
    assert not np.any(inside & (fwd < 0))


# -- bearings -------------------------------------------------------------------


def test_bearing_on_axis():
    q = CameraConfig((1, 2, 3), 0.2, 0.7)
    x = q.position + 2.5 * q.direction
    assert np.allclose(bearings(q, x), (0.0, 0.0), atol=1e-12)


def test_bearing_left_45():
    bh, bv = bearings(origin_cam(), (1, 1, 0))
    assert math.isclose(bh, math.radians(45))
    assert bv == 0.0


def test_bearing_down_45():
    _, bv = bearings(origin_cam(), (1, 0, -1))
    assert math.isclose(bv, math.radians(-45))


def test_bearing_degenerate():
    with pytest.raises(ValueError):
        bearings(origin_cam(), (0, 0, 0))


# -- interp_attitude ------------------------------------------------------------


def test_interp_endpoint():
    a = (0.1, -2.0)
    assert interp_attitude(a, (0.3, 1.0), 0.0) == (0.1, -2.0)


def test_interp_midpoint():
    th, ps = interp_attitude((0.0, math.radians(10)), (math.radians(20), math.radians(30)), 0.5)
    assert math.isclose(th, math.radians(10))
    assert math.isclose(ps, math.radians(20))


def _short_arc_mid(a_deg, b_deg):
    # independent arithmetic: shortest signed difference in degrees
    diff = ((b_deg - a_deg + 180.0) % 360.0) - 180.0
    return ((a_deg + diff / 2 + 180.0) % 360.0) - 180.0


def test_interp_short_arc():
    _, ps = interp_attitude((0.0, math.radians(170)), (0.0, math.radians(-170)), 0.5)
    expect = _short_arc_mid(170, -170)
    assert math.isclose(abs(wrap_angle(ps - math.radians(expect))), 0.0, abs_tol=1e-12)
    assert math.isclose(abs(ps), math.pi)


@given(st.floats(-179, 179), st.floats(-179, 179))
def test_interp_matches_degree_arithmetic(a, b):
    assume(abs(abs(((b - a + 180) % 360) - 180) - 180) > 1e-6)
    _, ps = interp_attitude((0.0, math.radians(a)), (0.0, math.radians(b)), 0.5)
    assert abs(wrap_angle(ps - math.radians(_short_arc_mid(a, b)))) < 1e-9


@given(pitch, yaw, st.floats(0, 1))
def test_interp_fixed_point(th, ps, rho):
    out = interp_attitude((th, ps), (th, ps), rho)
    assert math.isclose(out[0], th, abs_tol=1e-12)
    assert abs(wrap_angle(out[1] - ps)) < 1e-12


def test_interp_rho_range():
    with pytest.raises(ValueError):
        interp_attitude((0, 0), (0, 1), 1.5)


# -- shift_offsets --------------------------------------------------------------


def test_shift_zero_identity(cam):
    hs = make_frustum(CameraConfig((1, 2, 3), 0.1, 0.4), cam)
    out = shift_offsets(hs, hs.direction, 0.0)
    assert np.array_equal(out.offsets, hs.offsets)


def test_shift_far_offset(cam):
    hs = make_frustum(CameraConfig((0, 0, 1), -0.2, 1.3), cam)
    out = shift_offsets(hs, hs.direction, 1.0)
    assert math.isclose(out.offsets[FAR] - hs.offsets[FAR], -1.0)


def test_shift_matches_rebuild_unit(cam):
    rng = np.random.default_rng(3)
    q = CameraConfig((0.5, -1, 1.5), 0.2, -0.6)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    moved = make_frustum(q.moved_to(q.position + d), cam)
    shifted = shift_offsets(make_frustum(q, cam), d, 1.0)
    pts = q.position + rng.uniform(-8, 8, size=(100, 3))
    assert np.array_equal(moved.contains(pts), shifted.contains(pts))


@given(configs(), frusta(), st.floats(0, 5), st.integers(0, 2**31))
def test_shift_matches_rebuild(q, fp, s, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    moved = make_frustum(q.moved_to(q.position + s * d), fp)
    shifted = shift_offsets(make_frustum(q, fp), d, s)
    pts = q.position + rng.uniform(-12, 12, size=(60, 3))
    # skip points that sit on a plane to rounding precision
    margin = np.min(np.abs(moved.values(pts)), axis=1)
    keep = margin > 1e-9
    assert np.array_equal(moved.contains(pts)[keep], shifted.contains(pts)[keep])


def test_negative_shift_rejected(cam):
    hs = make_frustum(origin_cam(), cam)
    with pytest.raises(ValueError):
        shift_offsets(hs, (1, 0, 0), -0.1)


def test_pitch_limits_enforced():
    with pytest.raises(ValueError):
        CameraConfig((0, 0, 0), math.radians(31), 0.0)
    with pytest.raises(ValueError):
        CameraConfig((0, 0, 0), math.radians(-81), 0.0)
