"""Camera frustum half-space algebra, bearings and attitude interpolation.

Angle convention used throughout the package: ``theta`` is pitch (elevation
toward +z) and ``psi`` is yaw (azimuth about +z). The viewing direction is

    u(theta, psi) = [cos(theta) cos(psi), cos(theta) sin(psi), sin(theta)]

The camera frame has its forward axis along ``u``, its second axis pointing
to the camera's left and its third axis pointing up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PITCH_MIN = math.radians(-80.0)
PITCH_MAX = math.radians(30.0)

# plane order inside a HalfSpaceSet
LEFT, RIGHT, UP, DOWN, FAR = range(5)
PLANE_NAMES = ("left", "right", "up", "down", "far")
SIDE_PLANES = (LEFT, RIGHT, UP, DOWN)

_PITCH_EPS = 1e-9


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def clamp_pitch(theta: float) -> float:
    return min(max(theta, PITCH_MIN), PITCH_MAX)


def view_direction(theta: float, psi: float) -> np.ndarray:
    ct = math.cos(theta)
    return np.array([ct * math.cos(psi), ct * math.sin(psi), math.sin(theta)])


def camera_axes(theta: float, psi: float) -> np.ndarray:
    """Rotation matrix whose columns are the forward, left and up axes."""
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [ct * cp, -sp, -st * cp],
            [ct * sp, cp, -st * sp],
            [st, 0.0, ct],
        ]
    )


def look_at(src, dst) -> tuple[float, float]:
    """(pitch, yaw) of the ray from ``src`` to ``dst``; pitch is not clamped."""
    d = np.asarray(dst, float) - np.asarray(src, float)
    n = float(np.linalg.norm(d))
    if n == 0.0:
        raise ValueError("look_at with coincident points")
    theta = math.asin(max(-1.0, min(1.0, d[2] / n)))
    psi = math.atan2(d[1], d[0])
    return theta, wrap_angle(psi)


@dataclass(frozen=True)
class CameraConfig:
    """A 5-DoF camera configuration: position plus pitch and yaw (radians)."""

    p: tuple
    theta: float
    psi: float

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if len(p) != 3:
            raise ValueError(f"position must have 3 components, got {len(p)}")
        theta = float(self.theta)
        if not (PITCH_MIN - _PITCH_EPS <= theta <= PITCH_MAX + _PITCH_EPS):
            raise ValueError(
                f"pitch {math.degrees(theta):.3f} deg outside gimbal limits [-80, 30]"
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    @property
    def position(self) -> np.ndarray:
        return np.array(self.p)

    @property
    def direction(self) -> np.ndarray:
        return view_direction(self.theta, self.psi)

    @property
    def attitude(self) -> tuple[float, float]:
        return (self.theta, self.psi)

    def with_attitude(self, theta: float, psi: float) -> "CameraConfig":
        return CameraConfig(self.p, theta, psi)

    def moved_to(self, p) -> "CameraConfig":
        return CameraConfig(tuple(p), self.theta, self.psi)


@dataclass(frozen=True)
class FrustumParams:
    alpha_h: float
    alpha_v: float
    r_max: float

    def __post_init__(self):
        if not 0.0 < self.alpha_h < math.pi:
            raise ValueError("alpha_h must lie in (0, pi)")
        if not 0.0 < self.alpha_v < math.pi:
            raise ValueError("alpha_v must lie in (0, pi)")
        if not self.r_max > 0.0:
            raise ValueError("r_max must be positive")

    @classmethod
    def from_degrees(cls, alpha_h_deg: float, alpha_v_deg: float, r_max: float):
        return cls(math.radians(alpha_h_deg), math.radians(alpha_v_deg), float(r_max))


@dataclass(frozen=True, eq=False)
class HalfSpaceSet:
    """Five planes ``n_m . x + h_m <= 0`` plus the apex and viewing direction.

    The apex is kept so that the apex point itself can be excluded; with the
    side planes alone the set is a closed cone whose only point with zero
    forward distance is the apex.
    """

    normals: np.ndarray  # (5, 3)
    offsets: np.ndarray  # (5,)
    apex: np.ndarray
    direction: np.ndarray

    def values(self, pts) -> np.ndarray:
        """Signed plane values; shape (5,) for one point or (N, 5) for many."""
        pts = np.asarray(pts, float)
        return pts @ self.normals.T + self.offsets

    def contains(self, pts) -> np.ndarray:
        """Vectorized membership for an (N, 3) array."""
        pts = np.atleast_2d(np.asarray(pts, float))
        if pts.shape[0] == 0:
            return np.zeros(0, bool)
        inside = np.all(self.values(pts) <= 0.0, axis=1)
        forward = (pts - self.apex) @ self.direction
        return inside & (forward > 0.0)


def make_frustum(config: CameraConfig, params: FrustumParams) -> HalfSpaceSet:
    axes = camera_axes(config.theta, config.psi)
    a = 0.5 * params.alpha_h
    b = 0.5 * params.alpha_v
    sa, ca = math.sin(a), math.cos(a)
    sb, cb = math.sin(b), math.cos(b)
    local = np.array(
        [
            [-sa, ca, 0.0],  # left:  y <= x tan(a)
            [-sa, -ca, 0.0],  # right: -y <= x tan(a)
            [-sb, 0.0, cb],  # up
            [-sb, 0.0, -cb],  # down
            [1.0, 0.0, 0.0],  # far
        ]
    )
    normals = local @ axes.T
    p = config.position
    offsets = -(normals @ p)
    offsets[FAR] -= params.r_max
    return HalfSpaceSet(normals, offsets, p, axes[:, 0].copy())


def point_in_frustum(hs: HalfSpaceSet, x) -> bool:
    return bool(hs.contains(np.asarray(x, float).reshape(1, 3))[0])


def to_camera_frame(config: CameraConfig, pts) -> np.ndarray:
    axes = camera_axes(config.theta, config.psi)
    return (np.asarray(pts, float) - config.position) @ axes


def bearings(config: CameraConfig, x) -> tuple[float, float]:
    """Horizontal and vertical bearing of ``x`` in the camera frame."""
    r = to_camera_frame(config, np.asarray(x, float).reshape(1, 3))[0]
    if float(np.linalg.norm(r)) < 1e-12:
        raise ValueError("degenerate bearing: point coincides with camera")
    return math.atan2(r[1], r[0]), math.atan2(r[2], r[0])


def bearings_many(config: CameraConfig, pts) -> tuple[np.ndarray, np.ndarray]:
    r = to_camera_frame(config, pts)
    return np.arctan2(r[:, 1], r[:, 0]), np.arctan2(r[:, 2], r[:, 0])


def interp_attitude(a, b, rho: float) -> tuple[float, float]:
    """Blend (pitch, yaw) pairs; yaw follows the shorter arc."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if rho == 0.0:
        return float(a[0]), wrap_angle(a[1])
    if rho == 1.0:
        return float(b[0]), wrap_angle(b[1])
    theta = (1.0 - rho) * a[0] + rho * b[0]
    psi = a[1] + rho * wrap_angle(b[1] - a[1])
    return theta, wrap_angle(psi)


def interp_config(a: CameraConfig, b: CameraConfig, rho: float) -> CameraConfig:
    """Straight-line position and short-arc attitude blend."""
    rho = min(max(rho, 0.0), 1.0)
    p = a.position + rho * (b.position - a.position)
    theta, psi = interp_attitude(a.attitude, b.attitude, rho)
    return CameraConfig(tuple(p), theta, psi)


def shift_offsets(hs: HalfSpaceSet, d, s: float) -> HalfSpaceSet:
    """Translate the frustum by ``s`` along unit direction ``d``."""
    if s < 0.0:
        raise ValueError("shift must be non-negative")
    d = np.asarray(d, float)
    offsets = hs.offsets - s * (hs.normals @ d)
    return HalfSpaceSet(hs.normals, offsets, hs.apex + s * d, hs.direction)
