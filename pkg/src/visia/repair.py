"""Viewpoint repair: candidate sampling, frustum shift, attitude refinement,
replacement selection and greedy coverage completion."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import vis
from .geom import (
    PITCH_MAX,
    PITCH_MIN,
    CameraConfig,
    FrustumParams,
    HalfSpaceSet,
    bearings_many,
    camera_axes,
    clamp_pitch,
    look_at,
    make_frustum,
    shift_offsets,
    view_direction,
)
from .world import clearance_many, min_clearance, unblocked, voxels_in_frustum

ETA_MAX = math.radians(30.0)
DEFAULT_STEP = math.radians(15.0)
N_BIS = 10
SHIFT_ROUNDS = 3


@dataclass(frozen=True)
class DirectionTemplate:
    thetas: np.ndarray
    psis: np.ndarray
    dirs: np.ndarray  # (K, 3) unit vectors
    d_theta: float
    d_psi: float

    def __len__(self):
        return len(self.dirs)


@dataclass(eq=False)
class Candidate:
    config: CameraConfig
    source: int  # index of the viewpoint being repaired
    s_lb: float
    s_star: float
    cov: np.ndarray  # bool mask over the window's element universe


@dataclass(frozen=True)
class BoundInterval:
    element: int
    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return self.lo > self.hi


def build_template(params: FrustumParams, d_theta=DEFAULT_STEP, d_psi=DEFAULT_STEP) -> DirectionTemplate:
    """Offsets on an (n d_theta, m d_psi) lattice strictly inside (-alpha, alpha).

    Directions are ordered center-out so that a truncated pass still samples
    the neighbourhood of the nominal line of sight first.
    """
    if not 0.0 < d_theta <= params.alpha_v or not 0.0 < d_psi <= params.alpha_h:
        raise ValueError("template steps must lie in (0, alpha]")
    eps = 1e-12
    nt = int(math.floor(params.alpha_v / d_theta - eps))
    np_ = int(math.floor(params.alpha_h / d_psi - eps))
    pairs = [
        (n, m)
        for n in range(-nt, nt + 1)
        for m in range(-np_, np_ + 1)
        if abs(n * d_theta) < params.alpha_v and abs(m * d_psi) < params.alpha_h
    ]
    pairs.sort(key=lambda nm: (abs(nm[0]) + abs(nm[1]), abs(nm[0]), nm[0], nm[1]))
    thetas = np.array([n * d_theta for n, _ in pairs])
    psis = np.array([m * d_psi for _, m in pairs])
    dirs = np.array([view_direction(t, p) for t, p in zip(thetas, psis)])
    return DirectionTemplate(thetas, psis, dirs, d_theta, d_psi)


def anchor(points, iters: int = 50, tol: float = 1e-6) -> np.ndarray:
    """Geometric median by Weiszfeld iteration started at the centroid."""
    pts = np.asarray(points, float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("anchor of an empty element set")
    x = pts.mean(axis=0)
    for _ in range(iters):
        d = np.linalg.norm(pts - x, axis=1)
        if np.any(d < 1e-12):
            x = x + 1e-9
            d = np.linalg.norm(pts - x, axis=1)
        w = 1.0 / d
        nxt = (pts * w[:, None]).sum(axis=0) / w.sum()
        step = float(np.linalg.norm(nxt - x))
        x = nxt
        if step < tol:
            break
    return x


def candidate_rotation(q: CameraConfig) -> np.ndarray:
    """Rotation taking +x to the reverse of ``q``'s viewing direction."""
    return camera_axes(-q.theta, q.psi + math.pi)


def instantiate_candidates(q: CameraConfig, m, tpl: DirectionTemplate, params: FrustumParams):
    """Configurations on the sphere of radius r_max about ``m``, aimed at ``m``."""
    m = np.asarray(m, float)
    R = candidate_rotation(q)
    out = []
    for u in tpl.dirs:
        p = m + params.r_max * (R @ u)
        theta, psi = look_at(p, m)
        out.append(CameraConfig(tuple(p), clamp_pitch(theta), psi))
    return out


def s_lower_bound(hs: HalfSpaceSet, d, obstacles, d_min: float) -> float:
    """Smallest forward shift that expels every obstacle sample with margin d_min.

    Returns ``math.inf`` when some sample has no plane that recedes from it.
    """
    obstacles = np.asarray(obstacles, float).reshape(-1, 3)
    if len(obstacles) == 0:
        return 0.0
    nd = hs.normals @ np.asarray(d, float)
    expelling = nd < 0.0
    if not np.any(expelling):
        return math.inf
    kappa = obstacles @ hs.normals[expelling].T + hs.offsets[expelling]
    need = (d_min - kappa) / (-nd[expelling])
    return max(0.0, float(need.min(axis=1).max()))


def element_interval(e: int, x, hs: HalfSpaceSet, d) -> BoundInterval:
    """Shifts s for which point ``x`` satisfies all five plane inequalities."""
    lo, hi = -math.inf, math.inf
    a = hs.normals @ np.asarray(x, float) + hs.offsets
    b = hs.normals @ np.asarray(d, float)
    for am, bm in zip(a, b):
        if abs(bm) < 1e-12:
            if am > 0.0:
                return BoundInterval(e, math.inf, -math.inf)
        elif bm > 0.0:
            lo = max(lo, am / bm)
        else:
            hi = min(hi, am / bm)
    return BoundInterval(e, lo, hi)


def element_intervals(ids, pts, hs: HalfSpaceSet, d) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``element_interval``: (lo, hi) arrays."""
    pts = np.asarray(pts, float).reshape(-1, 3)
    a = pts @ hs.normals.T + hs.offsets  # (N, 5)
    b = hs.normals @ np.asarray(d, float)
    lo = np.full(len(pts), -math.inf)
    hi = np.full(len(pts), math.inf)
    for m in range(len(b)):
        if abs(b[m]) < 1e-12:
            bad = a[:, m] > 0.0
            lo[bad] = math.inf
            hi[bad] = -math.inf
        elif b[m] > 0.0:
            lo = np.maximum(lo, a[:, m] / b[m])
        else:
            hi = np.minimum(hi, a[:, m] / b[m])
    return lo, hi


def optimal_shift(intervals, s_lb: float) -> tuple[float, int]:
    """Smallest s >= s_lb maximizing how many closed intervals contain s.

    ``intervals`` is a sequence of BoundInterval or (lo, hi) pairs, or a
    ``(lo_array, hi_array)`` tuple of equal-length arrays.
    """
    if not math.isfinite(s_lb):
        raise ValueError("s_lb must be finite")
    if isinstance(intervals, tuple) and len(intervals) == 2 and isinstance(intervals[0], np.ndarray):
        lo, hi = (np.asarray(a, float) for a in intervals)
    else:
        pairs = [(iv.lo, iv.hi) if isinstance(iv, BoundInterval) else iv for iv in intervals]
        arr = np.asarray(pairs, float).reshape(-1, 2)
        lo, hi = arr[:, 0], arr[:, 1]
    lo = np.maximum(lo, s_lb)
    keep = lo <= hi
    lo, hi = lo[keep], hi[keep]
    if len(lo) == 0:
        return s_lb, 0
    pos = np.concatenate([lo, hi])
    kind = np.concatenate([np.zeros(len(lo), np.int8), np.ones(len(hi), np.int8)])
    # starts sort before ends at equal positions, so touching intervals overlap
    order = np.lexsort((kind, pos))
    step = np.where(kind[order] == 0, 1, -1)
    running = np.cumsum(step)
    k = int(np.argmax(running))  # first position reaching the maximum
    return float(pos[order][k]), int(running[k])


def neighbor_obstacles(q: CameraConfig, grid, params: FrustumParams, slack=ETA_MAX) -> np.ndarray:
    """Obstacle samples within r_max whose bearings sit near the frustum."""
    pts = grid.centers("obstacle")
    if len(pts) == 0:
        return pts.reshape(0, 3)
    tree = grid.tree("obstacle")
    idx = tree.query_ball_point(q.position, params.r_max)
    if not idx:
        return pts[:0]
    near = pts[np.sort(np.asarray(idx, int))]
    bh, bv = bearings_many(q, near)
    keep = (np.abs(bh) <= 0.5 * params.alpha_h + slack) & (np.abs(bv) <= 0.5 * params.alpha_v + slack)
    return near[keep]


def angular_margins(q: CameraConfig, obstacles, params: FrustumParams) -> tuple[float, float]:
    """Rotation room before the nearest neighbouring sample crosses a side plane.

    The horizontal margin only considers samples inside the vertical band of
    the frustum (and vice versa): a sample far above the frustum cannot enter
    it through a pure yaw rotation.
    """
    obstacles = np.asarray(obstacles, float).reshape(-1, 3)
    eta_h = eta_v = ETA_MAX
    if len(obstacles):
        bh, bv = bearings_many(q, obstacles)
        band_h = np.abs(bv) <= 0.5 * params.alpha_v
        band_v = np.abs(bh) <= 0.5 * params.alpha_h
        if np.any(band_h):
            eta_h = float(np.min(np.abs(bh[band_h]) - 0.5 * params.alpha_h))
        if np.any(band_v):
            eta_v = float(np.min(np.abs(bv[band_v]) - 0.5 * params.alpha_v))
    return min(max(eta_h, 0.0), ETA_MAX), min(max(eta_v, 0.0), ETA_MAX)


def _count(q, ids, grid, surface, params) -> int:
    return len(vis.visible_elements(q, ids, grid, surface, params))


def _bisect_clean(make, delta, grid, params, n_bis):
    """Largest fraction of ``delta`` (searched by bisection) with a clean frustum."""
    q = make(delta)
    if not vis.occ(q, grid, params):
        return q
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(n_bis):
        mid = 0.5 * (lo + hi)
        qm = make(mid * delta)
        if vis.occ(qm, grid, params):
            hi = mid
        else:
            lo, best = mid, qm
    return best


def refine_attitude(q: CameraConfig, margins, ids, grid, surface, params, n_bis=N_BIS) -> CameraConfig:
    """Yaw then pitch re-aim toward the middle of the visible elements.

    Each axis targets the midpoint of the bearing extent of ``ids`` (clipped
    to the margin), backs off by bisection if that attitude is occluded, and
    keeps the move only if the visible count does not drop.
    """
    eta_h, eta_v = margins
    ids = np.asarray(ids, int)
    if len(ids) == 0 or (eta_h <= 0.0 and eta_v <= 0.0):
        return q
    best = q
    best_n = _count(q, ids, grid, surface, params)
    for axis in (1, 0):
        eta = eta_h if axis == 1 else eta_v
        if eta <= 0.0:
            continue
        bh, bv = bearings_many(best, surface.points[ids])
        b = bh if axis == 1 else bv
        front = np.isfinite(b)
        if not np.any(front):
            continue
        delta = 0.5 * (float(b[front].min()) + float(b[front].max()))
        delta = min(max(delta, -eta), eta)
        if abs(delta) < 1e-9:
            continue
        base = best
        if axis == 1:
            make = lambda dl, base=base: base.with_attitude(base.theta, base.psi + dl)  # noqa: E731
        else:
            make = lambda dl, base=base: base.with_attitude(  # noqa: E731
                min(max(base.theta + dl, PITCH_MIN), PITCH_MAX), base.psi
            )
        cand = _bisect_clean(make, delta, grid, params, n_bis)
        if cand is None:
            continue
        n = _count(cand, ids, grid, surface, params)
        if n >= best_n:
            best, best_n = cand, n
    return best


@dataclass
class RepairSettings:
    d_min: float = 0.2
    n_bis: int = N_BIS
    template: DirectionTemplate | None = None


def repair_viewpoint(
    node,
    source: int,
    universe,
    grid,
    surface,
    params: FrustumParams,
    settings: RepairSettings,
    deadline: float | None = None,
) -> list[Candidate]:
    """Candidate pool for one invalid viewpoint.

    ``universe`` is the array of element ids the coverage masks range over;
    it must contain the node's intended subset.
    """
    tpl = settings.template or build_template(params)
    intended = np.asarray(node.intended, int)
    universe = np.asarray(universe, int)
    in_intended = np.isin(universe, intended)
    m = anchor(surface.points[intended])
    pool = []
    for q0 in instantiate_candidates(node.config, m, tpl, params):
        if deadline is not None and time.perf_counter() > deadline:
            break
        if not grid.in_bounds(q0.p):
            continue
        p0 = q0.position
        seen = intended[unblocked(grid, p0, surface.points[intended], skip_end=True)]
        if len(seen) == 0:
            continue
        d = q0.direction
        hs0 = make_frustum(q0, params)
        s_lb = 0.0
        s_star = None
        for _ in range(SHIFT_ROUNDS):
            hs = shift_offsets(hs0, d, s_lb)
            inside = voxels_in_frustum(grid, hs, "obstacle")
            extra = s_lower_bound(hs, d, inside, settings.d_min)
            if not math.isfinite(extra):
                s_star = None
                break
            s_lb += extra
            lo, hi = element_intervals(seen, surface.points[seen], hs0, d)
            s_star, count = optimal_shift((lo, hi), s_lb)
            if count == 0:
                s_star = None
                break
            q = q0.moved_to(p0 + s_star * d)
            if not vis.occ(q, grid, params):
                break
            s_lb = s_star + 1e-6
            s_star = None
        if s_star is None:
            continue
        q = q0.moved_to(p0 + s_star * d)
        if not grid.in_bounds(q.p) or min_clearance(grid, q.p) < settings.d_min:
            continue
        if vis.occ(q, grid, params):
            continue
        margins = angular_margins(q, neighbor_obstacles(q, grid, params), params)
        q = refine_attitude(q, margins, seen, grid, surface, params, settings.n_bis)
        if vis.occ(q, grid, params):
            continue
        cov = np.zeros(len(universe), bool)
        vis_ids = vis.visible_elements(q, universe, grid, surface, params)
        cov[np.searchsorted(universe, vis_ids)] = True
        if not np.any(cov & in_intended):
            continue
        pool.append(Candidate(q, source, s_lb, s_star, cov))
    return pool


def _lex(p):
    return tuple(round(v, 9) for v in p)


def replacement_score(c: Candidate, intended_mask, nominal_p, lam_d) -> tuple[float, float]:
    frac = np.count_nonzero(c.cov & intended_mask) / max(1, np.count_nonzero(intended_mask))
    disp = float(np.linalg.norm(c.config.position - np.asarray(nominal_p, float)))
    return frac - lam_d * disp, disp


def select_replacements(pools: dict, intended_masks: dict, nominal: dict, lam_d: float = 5.0) -> dict:
    """One replacement per repaired viewpoint; ``None`` for an empty pool."""
    if lam_d < 0:
        raise ValueError("lambda_d must be non-negative")
    out = {}
    for src, pool in pools.items():
        best, best_key = None, None
        for c in pool:
            score, disp = replacement_score(c, intended_masks[src], nominal[src], lam_d)
            key = (-score, disp, _lex(c.config.p))
            if best_key is None or key < best_key:
                best, best_key = c, key
        out[src] = best
    return out


def complete_coverage(candidates, covered, positions, lam_d: float = 5.0, deadline=None):
    """Greedy augmentation until the uncovered set stops shrinking.

    ``covered`` is the bool mask already achieved by the current set and
    ``positions`` its camera positions. Returns (picked candidates, residual mask).
    """
    uncovered = ~np.asarray(covered, bool)
    positions = [np.asarray(p, float) for p in positions]
    remaining = list(candidates)
    picked = []
    while np.any(uncovered) and remaining:
        if deadline is not None and time.perf_counter() > deadline:
            break
        n_u = np.count_nonzero(uncovered)
        best, best_score = None, -math.inf
        for j, c in enumerate(remaining):
            gain = np.count_nonzero(c.cov & uncovered)
            if gain == 0:
                continue
            if positions:
                d_nn = min(float(np.linalg.norm(c.config.position - p)) for p in positions)
            else:
                d_nn = 0.0
            score = gain / n_u - lam_d * d_nn
            if score > best_score:
                best, best_score = j, score
        if best is None:
            break
        c = remaining.pop(best)
        picked.append(c)
        uncovered &= ~c.cov
        positions.append(c.config.position)
    return picked, uncovered


def clear_lattice_position(q: CameraConfig, grid, d_min: float, step: float, reach: float = 3.0):
    """Nearest lattice offset of ``q`` with clearance >= d_min (same attitude)."""
    n = int(math.ceil(reach / step))
    r = np.arange(-n, n + 1) * step
    offs = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    dist = np.linalg.norm(offs, axis=1)
    order = np.lexsort((offs[:, 2], offs[:, 1], offs[:, 0], dist))
    pts = q.position + offs[order]
    ok = grid.in_bounds_many(pts)
    pts = pts[ok]
    clear = clearance_many(grid, pts) >= d_min
    if not np.any(clear):
        return None
    return q.moved_to(pts[np.argmax(clear)])
