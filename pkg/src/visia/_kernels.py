"""Compiled inner loops: voxel traversal and frustum point tests."""

import math

import numpy as np
from numba import njit

TARGET = 2
OBSTACLE = 3


@njit(cache=True)
def _floor_index(x, lo, res):
    return int(math.floor((x - lo) / res))


@njit(cache=True)
def traverse(codes, origin, res, a, b, block_target, block_obstacle, skip_end):
    """Amanatides-Woo walk from ``a`` to ``b``.

    Returns (hit, i, j, k, t_enter) for the first blocking voxel, where
    ``t_enter`` is the segment parameter at which the ray enters it.
    """
    nx, ny, nz = codes.shape
    cur = np.empty(3, np.int64)
    end = np.empty(3, np.int64)
    step = np.zeros(3, np.int64)
    t_max = np.empty(3)
    t_delta = np.empty(3)
    for ax in range(3):
        cur[ax] = _floor_index(a[ax], origin[ax], res)
        end[ax] = _floor_index(b[ax], origin[ax], res)
        d = b[ax] - a[ax]
        if d > 0.0:
            step[ax] = 1
            boundary = origin[ax] + (cur[ax] + 1) * res
            t_max[ax] = (boundary - a[ax]) / d
            t_delta[ax] = res / d
        elif d < 0.0:
            step[ax] = -1
            boundary = origin[ax] + cur[ax] * res
            t_max[ax] = (boundary - a[ax]) / d
            t_delta[ax] = -res / d
        else:
            t_max[ax] = np.inf
            t_delta[ax] = np.inf
        if cur[ax] == end[ax]:
            t_max[ax] = np.inf
    n_steps = abs(end[0] - cur[0]) + abs(end[1] - cur[1]) + abs(end[2] - cur[2])
    t_enter = 0.0
    for it in range(n_steps + 1):
        i, j, k = cur[0], cur[1], cur[2]
        at_end = i == end[0] and j == end[1] and k == end[2]
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            if not (skip_end and at_end):
                c = codes[i, j, k]
                if (c == TARGET and block_target) or (c == OBSTACLE and block_obstacle):
                    return True, i, j, k, t_enter
        if at_end or it == n_steps:
            break
        ax = 0
        if t_max[1] < t_max[ax]:
            ax = 1
        if t_max[2] < t_max[ax]:
            ax = 2
        if t_max[ax] == np.inf:
            break
        t_enter = t_max[ax]
        cur[ax] += step[ax]
        if cur[ax] == end[ax]:
            t_max[ax] = np.inf
        else:
            t_max[ax] += t_delta[ax]
    return False, -1, -1, -1, 1.0


@njit(cache=True)
def unblocked_mask(codes, origin, res, a, ends, block_target, block_obstacle, skip_end):
    n = ends.shape[0]
    out = np.ones(n, np.bool_)
    for r in range(n):
        hit, _, _, _, _ = traverse(
            codes, origin, res, a, ends[r], block_target, block_obstacle, skip_end
        )
        out[r] = not hit
    return out


@njit(cache=True)
def any_inside(normals, offsets, apex, direction, pts):
    """True when at least one point satisfies all five plane inequalities."""
    for r in range(pts.shape[0]):
        inside = True
        for m in range(5):
            v = (
                normals[m, 0] * pts[r, 0]
                + normals[m, 1] * pts[r, 1]
                + normals[m, 2] * pts[r, 2]
                + offsets[m]
            )
            if v > 0.0:
                inside = False
                break
        if inside:
            fwd = (
                (pts[r, 0] - apex[0]) * direction[0]
                + (pts[r, 1] - apex[1]) * direction[1]
                + (pts[r, 2] - apex[2]) * direction[2]
            )
            if fwd > 0.0:
                return True
    return False


@njit(cache=True)
def occ_config(p, theta, psi, sa, ca, sb, cb, r_max, pts):
    """Frustum-contains-any test built directly from position and attitude.

    ``sa, ca`` are sin/cos of half the horizontal angle, ``sb, cb`` of half
    the vertical angle. Mirrors the five-plane set of ``geom.make_frustum``.
    """
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    f0, f1, f2 = ct * cp, ct * sp, st
    l0, l1 = -sp, cp
    u0, u1, u2 = -st * cp, -st * sp, ct
    for r in range(pts.shape[0]):
        x = pts[r, 0] - p[0]
        y = pts[r, 1] - p[1]
        z = pts[r, 2] - p[2]
        fwd = f0 * x + f1 * y + f2 * z
        if fwd <= 0.0 or fwd > r_max:
            continue
        lat = l0 * x + l1 * y
        if -sa * fwd + ca * lat > 0.0 or -sa * fwd - ca * lat > 0.0:
            continue
        ver = u0 * x + u1 * y + u2 * z
        if -sb * fwd + cb * ver > 0.0 or -sb * fwd - cb * ver > 0.0:
            continue
        return True
    return False


@njit(cache=True)
def occ_many(P, TH, PS, sa, ca, sb, cb, r_max, pts):
    """``occ_config`` over rows of positions and attitudes."""
    out = np.zeros(P.shape[0], np.bool_)
    for i in range(P.shape[0]):
        out[i] = occ_config(P[i], TH[i], PS[i], sa, ca, sb, cb, r_max, pts)
    return out


@njit(cache=True)
def _rotated_ok(theta, d, pmin, pmax):
    t = theta + d
    return pmin - 1e-12 <= t <= pmax + 1e-12


@njit(cache=True)
def bisect_axis(p, theta, psi, axis, sign, bound, n_bis, pmin, pmax, sa, ca, sb, cb, r_max, pts):
    """Smallest rotation magnitude in (0, bound] along one axis that clears pts.

    Returns (found, magnitude, evaluations). Pitch moves that would cross
    the gimbal limits are shortened to the limit.
    """
    evals = 0
    if axis == 0:
        lim = (pmax - theta) if sign > 0 else (theta - pmin)
        if lim <= 0.0:
            return False, 0.0, evals
        if lim < bound:
            bound = lim
    th = theta + sign * bound if axis == 0 else theta
    ps = psi + sign * bound if axis == 1 else psi
    if th < pmin:
        th = pmin
    if th > pmax:
        th = pmax
    evals += 1
    if occ_config(p, th, ps, sa, ca, sb, cb, r_max, pts):
        return False, 0.0, evals
    lo, hi = 0.0, bound
    for _ in range(n_bis):
        mid = 0.5 * (lo + hi)
        th = theta + sign * mid if axis == 0 else theta
        ps = psi + sign * mid if axis == 1 else psi
        evals += 1
        if occ_config(p, th, ps, sa, ca, sb, cb, r_max, pts):
            lo = mid
        else:
            hi = mid
    return True, hi, evals


@njit(cache=True)
def lattice_scan(p, theta, psi, cells, step, pmin, pmax, sa, ca, sb, cb, r_max, pts):
    """First clean (i, j) lattice offset in the given order; -1 if none."""
    evals = 0
    for c in range(cells.shape[0]):
        th = theta + cells[c, 0] * step
        if th < pmin - 1e-12 or th > pmax + 1e-12:
            continue
        evals += 1
        if not occ_config(p, th, psi + cells[c, 1] * step, sa, ca, sb, cb, r_max, pts):
            return c, evals
    return -1, evals


@njit(cache=True)
def pick_critical(p, theta, psi, sa, ca, sb, cb, r_max, pts, radius):
    """Index and side plane of the in-frustum sample closest to a side plane.

    Samples within ``radius`` of the camera are preferred; the rest are only
    consulted when no nearby sample is inside. Ties go to the nearer sample.
    Returns (-1, -1) when the frustum is empty.
    """
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    f0, f1, f2 = ct * cp, ct * sp, st
    l0, l1 = -sp, cp
    u0, u1, u2 = -st * cp, -st * sp, ct
    best = np.array([-1, -1, -1, -1], np.int64)  # local idx, local plane, far idx, far plane
    best_key = np.array([np.inf, np.inf, np.inf, np.inf])  # slack, dist (local), slack, dist (far)
    vals = np.empty(4)
    for r in range(pts.shape[0]):
        x = pts[r, 0] - p[0]
        y = pts[r, 1] - p[1]
        z = pts[r, 2] - p[2]
        fwd = f0 * x + f1 * y + f2 * z
        if fwd <= 0.0 or fwd > r_max:
            continue
        lat = l0 * x + l1 * y
        ver = u0 * x + u1 * y + u2 * z
        vals[0] = -sa * fwd + ca * lat
        vals[1] = -sa * fwd - ca * lat
        vals[2] = -sb * fwd + cb * ver
        vals[3] = -sb * fwd - cb * ver
        worst = 0
        for m in range(1, 4):
            if vals[m] > vals[worst]:
                worst = m
        if vals[worst] > 0.0:
            continue
        slack = -vals[worst]
        dist = math.sqrt(x * x + y * y + z * z)
        o = 0 if dist <= radius else 2
        if slack < best_key[o] or (slack == best_key[o] and dist < best_key[o + 1]):
            best_key[o] = slack
            best_key[o + 1] = dist
            best[o] = r
            best[o + 1] = worst
    if best[0] >= 0:
        return best[0], best[1]
    return best[2], best[3]
