"""Clean-sensing segment search.

Weighted A* over a 3D position lattice. Every expanded neighbour is lifted to
a full camera configuration by interpolating the endpoint attitudes; lifted
configurations whose frustum contains an obstacle get a bounded pitch/yaw
correction, and verdicts are memoized under a quantized key.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, vis
from .geom import (
    LEFT,
    PITCH_MAX,
    PITCH_MIN,
    RIGHT,
    SIDE_PLANES,
    UP,
    CameraConfig,
    FrustumParams,
    interp_attitude,
    interp_config,
    wrap_angle,
)
from .world import VoxelGrid, clearance_many, default_local_radius

CORRECTION_BOUND = math.radians(30.0)
LATTICE_STEP = math.radians(5.0)

_OFFSETS = np.array(
    [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)], dtype=np.int64
)
_STEP_LEN = np.linalg.norm(_OFFSETS, axis=1)

UNREACHABLE = "unreachable"
OCCLUDED = "occluded"
BUDGET = "budget"


@dataclass
class SearchParams:
    delta_p: float = 0.1
    lambda_heu: float = 10.0
    d_min: float = 0.2
    budget_ms: float | None = None  # None means unbounded
    n_bis: int = 10
    cache_deg: float = 5.0
    visibility: bool = True
    use_cache: bool = True
    max_expansions: int = 2_000_000

    def __post_init__(self):
        if not self.delta_p > 0:
            raise ValueError("delta_p must be positive")
        if self.lambda_heu < 1:
            raise ValueError("lambda_heu must be >= 1")
        if self.budget_ms is not None and self.budget_ms < 0:
            raise ValueError("budget must be non-negative")

    @property
    def cache_quantum(self) -> float:
        return math.radians(self.cache_deg)


@dataclass
class Counters:
    occ_evals: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    corrections: int = 0
    expansions: int = 0


def lift(p, qa: CameraConfig, qb: CameraConfig) -> tuple[float, float]:
    """Attitude interpolated by relative distance to the two endpoints."""
    p = tuple(float(v) for v in p)
    da = math.dist(p, qa.p)
    db = math.dist(p, qb.p)
    if da + db == 0.0:
        raise ValueError("degenerate lift: both endpoints coincide with the point")
    return interp_attitude(qa.attitude, qb.attitude, da / (da + db))


def lift_many(P, qa: CameraConfig, qb: CameraConfig) -> tuple[np.ndarray, np.ndarray]:
    """``lift`` for an (N, 3) array of positions."""
    P = np.asarray(P, float)
    da = np.linalg.norm(P - qa.position, axis=1)
    db = np.linalg.norm(P - qb.position, axis=1)
    if np.any(da + db == 0.0):
        raise ValueError("degenerate lift: both endpoints coincide with the point")
    rho = da / (da + db)
    theta = (1.0 - rho) * qa.theta + rho * qb.theta
    psi = qa.psi + rho * wrap_angle(qb.psi - qa.psi)
    psi = psi - 2.0 * math.pi * np.round(psi / (2.0 * math.pi))
    theta = np.where(rho == 1.0, qb.theta, theta)
    psi = np.where(rho == 1.0, qb.psi, psi)
    return theta, psi


def _key(p, theta, psi, delta_p, d_theta, d_psi):
    return (
        math.floor(p[0] / delta_p),
        math.floor(p[1] / delta_p),
        math.floor(p[2] / delta_p),
        math.floor(theta / d_theta),
        math.floor(psi / d_psi),
    )


def cache_key(q: CameraConfig, delta_p: float, d_theta: float, d_psi: float | None = None) -> tuple:
    return _key(q.p, q.theta, q.psi, delta_p, d_theta, d_theta if d_psi is None else d_psi)


class VisCache:
    """Quantized memo of clean/dirty verdicts for lifted configurations.

    A hit is honoured only when the stored query matches exactly; with a
    deterministic lift this makes the cache transparent to search results.
    Entries are dropped whenever the grid version moves.
    """

    def __init__(self, delta_p: float = 0.1, quantum: float = math.radians(5.0)):
        self.delta_p = delta_p
        self.quantum = quantum
        self.version = None
        self.entries: dict = {}
        self.hits = 0
        self.misses = 0

    def sync(self, grid: VoxelGrid):
        if self.version != grid.version:
            self.entries.clear()
            self.version = grid.version

    def lookup(self, ident: tuple):
        """Stored verdict for ``ident = (p, theta, psi)``, or None."""
        e = self.entries.get(_key(*ident, self.delta_p, self.quantum, self.quantum))
        if e is not None and e[0] == ident:
            self.hits += 1
            return e[1]
        self.misses += 1
        return None

    def store(self, ident: tuple, result):
        """``result`` is the verified configuration, or False for a failed node."""
        self.entries[_key(*ident, self.delta_p, self.quantum, self.quantum)] = (ident, result)

    def get(self, q: CameraConfig):
        return self.lookup((q.p, q.theta, q.psi))

    def put(self, q: CameraConfig, result):
        self.store((q.p, q.theta, q.psi), result)

    def __len__(self):
        return len(self.entries)


def _occ(q, grid, params, counters):
    if counters is not None:
        counters.occ_evals += 1
    return vis.occ(q, grid, params)


def _pick_occluder(q, grid, params):
    """Obstacle sample inside the frustum nearest to a side plane, and that plane.

    Samples within the local query radius take precedence over distant ones.
    """
    pts = grid.centers("obstacle")
    if len(pts) == 0:
        return None, None
    r, plane = _kernels.pick_critical(
        np.asarray(q.p, float), q.theta, q.psi, *_shape(params), pts, default_local_radius(params)
    )
    if r < 0:
        return None, None
    return pts[r], int(SIDE_PLANES[plane])


def _shape(params: FrustumParams):
    a, b = 0.5 * params.alpha_h, 0.5 * params.alpha_v
    return math.sin(a), math.cos(a), math.sin(b), math.cos(b), params.r_max


def _lattice_cells(bound):
    n = int(round(bound / LATTICE_STEP))
    cells = [(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1) if i or j]
    cells.sort(key=lambda ij: (abs(ij[0]) + abs(ij[1]), abs(ij[0]), ij[0], ij[1]))
    return np.array(cells, dtype=np.int64).reshape(-1, 2)


_CELLS = _lattice_cells(CORRECTION_BOUND)


def _reachable_samples(pts, p, q: CameraConfig, params: FrustumParams):
    """Samples that some frustum within the correction box could contain.

    Every such frustum lies inside a cone around the current view direction
    whose half-angle is the correction bound plus the frustum's corner angle.
    Dropping the rest changes no verdict and makes each test cheaper.
    """
    rel = pts - p
    dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    ta, tb = math.tan(0.5 * params.alpha_h), math.tan(0.5 * params.alpha_v)
    half = CORRECTION_BOUND + math.atan(math.hypot(ta, tb)) + 1e-6
    # the far bound is a plane, so corner points reach r_max / cos(corner angle)
    keep = (dist > 0.0) & (dist <= params.r_max * math.sqrt(1.0 + ta * ta + tb * tb) + 1e-9)
    if half < math.pi:
        keep &= rel @ q.direction >= math.cos(half) * dist
    return np.ascontiguousarray(pts[keep])


def attitude_correct(q: CameraConfig, grid, params: FrustumParams, n_bis: int = 10, counters=None):
    """Minimum-perturbation pitch/yaw change that empties the frustum.

    Single-axis bisections come first (the axis of the plane nearest the
    critical occluder, expelling direction first); if neither axis alone
    works, the 5-degree attitude lattice within the search box is scanned in
    order of increasing perturbation. Returns the corrected configuration or
    ``None`` when nothing within +-30 degrees is clean.
    """
    shape = _shape(params)
    p = np.asarray(q.p, float)
    pts = _reachable_samples(grid.centers("obstacle"), p, q, params)
    if not _kernels.occ_config(p, q.theta, q.psi, *shape, pts):
        raise ValueError("attitude_correct called on a clean configuration")
    if counters is not None:
        counters.corrections += 1
        counters.occ_evals += 1
    _, plane = _pick_occluder(q, grid, params)
    bound = CORRECTION_BOUND
    if plane is None:
        first_axis, sign = 1, 1.0
    elif plane in (LEFT, RIGHT):
        # yaw increases toward the camera's left; a sample on the left edge
        # leaves the frustum when the camera turns right
        first_axis, sign = 1, (-1.0 if plane == LEFT else 1.0)
    else:
        first_axis, sign = 0, (-1.0 if plane == UP else 1.0)
    best = None
    for axis in (1, 0):
        signs = (sign, -sign) if axis == first_axis else (1.0, -1.0)
        for s in signs:
            ok, mag, evals = _kernels.bisect_axis(
                p, q.theta, q.psi, axis, s, bound, n_bis, PITCH_MIN, PITCH_MAX, *shape, pts
            )
            if counters is not None:
                counters.occ_evals += evals
            if ok:
                if best is None or mag < best[0]:
                    best = (mag, axis, s)
                break
    if best is not None:
        mag, axis, s = best
        if axis == 0:
            return q.with_attitude(min(max(q.theta + s * mag, PITCH_MIN), PITCH_MAX), q.psi)
        return q.with_attitude(q.theta, q.psi + s * mag)
    c, evals = _kernels.lattice_scan(
        p, q.theta, q.psi, _CELLS, LATTICE_STEP, PITCH_MIN, PITCH_MAX, *shape, pts
    )
    if counters is not None:
        counters.occ_evals += evals
    if c < 0:
        return None
    i, j = _CELLS[c]
    th = min(max(q.theta + i * LATTICE_STEP, PITCH_MIN), PITCH_MAX)
    return q.with_attitude(th, q.psi + j * LATTICE_STEP)


@dataclass
class Connector:
    configs: list
    length: float
    snap_residual: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.p for c in self.configs])


@dataclass
class SearchResult:
    connector: Connector | None
    reason: str | None
    counters: Counters = field(default_factory=Counters)
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.connector is not None


def _path_length(configs) -> float:
    if len(configs) < 2:
        return 0.0
    p = np.array([c.p for c in configs])
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def _goal_cell(pa, pb, step, grid, d_min):
    """Lattice point standing in for the goal, or None if the goal is not clear.

    The rounded point is preferred; when it violates clearance (goals often
    sit just outside d_min of an obstacle) the nearest clear corner of the
    surrounding lattice cube is used instead, provided the hop to the true
    goal is clear at its midpoint.
    """
    if clearance_many(grid, pb)[0] < d_min:
        return None
    rel = (pb - pa) / step
    base = np.floor(rel).astype(np.int64)
    cells = [tuple(int(v) for v in np.round(rel))]
    cells += [tuple(int(v) for v in base + np.array(c)) for c in itertools.product((0, 1), repeat=3)]
    cells = sorted(set(cells), key=lambda c: (float(np.linalg.norm(pa + np.array(c) * step - pb)), c))
    pos = pa + np.array(cells, dtype=np.float64) * step
    ok = (clearance_many(grid, pos) >= d_min) & (clearance_many(grid, 0.5 * (pos + pb)) >= d_min)
    for c, good in zip(cells, ok):
        if good:
            return c
    return None


def search(
    qa: CameraConfig,
    qb: CameraConfig,
    grid: VoxelGrid,
    frustum: FrustumParams,
    sp: SearchParams,
    cache: VisCache | None = None,
) -> SearchResult:
    """Connector from ``qa`` to ``qb`` on a lattice anchored at ``qa``.

    The goal is snapped to the nearest lattice point; when the snap is not
    exact the true goal configuration is appended after the lattice path.
    """
    t0 = time.perf_counter()
    deadline = None if sp.budget_ms is None else t0 + sp.budget_ms / 1000.0
    counters = Counters()
    if cache is None and sp.use_cache and sp.visibility:
        cache = VisCache(sp.delta_p, sp.cache_quantum)
    if cache is not None:
        cache.sync(grid)
        h0, m0 = cache.hits, cache.misses

    def finish(conn, reason):
        if cache is not None:
            counters.cache_hits = cache.hits - h0
            counters.cache_misses = cache.misses - m0
        return SearchResult(conn, reason, counters, 1000.0 * (time.perf_counter() - t0))

    step = sp.delta_p
    pa = qa.position
    pb = qb.position

    if deadline is not None and sp.budget_ms == 0:
        return finish(None, BUDGET)
    goal = _goal_cell(pa, pb, step, grid, sp.d_min)
    if goal is None:
        return finish(None, UNREACHABLE)
    goal_pos = pa + np.array(goal) * step
    residual = float(np.linalg.norm(goal_pos - pb))

    lo_idx = np.ceil((grid.origin - pa) / step - 1e-9).astype(np.int64)
    hi_idx = np.floor((grid.bounds_max - pa) / step + 1e-9).astype(np.int64)

    shape = _shape(frustum)
    obstacles = np.ascontiguousarray(grid.centers("obstacle"), dtype=np.float64).reshape(-1, 3)
    start = (0, 0, 0)
    g = {start: 0.0}
    parent = {start: None}
    att = {start: qa}
    closed = set()
    tie = itertools.count()
    heap = [(sp.lambda_heu * float(np.linalg.norm(pa - goal_pos)), next(tie), start)]
    saw_dirty = False

    while heap:
        if deadline is not None and time.perf_counter() > deadline:
            return finish(None, BUDGET)
        if counters.expansions >= sp.max_expansions:
            return finish(None, BUDGET)
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        counters.expansions += 1
        if cur == goal:
            chain = []
            node = cur
            while node is not None:
                chain.append(att[node])
                node = parent[node]
            chain.reverse()
            if residual > 0.0:
                chain.append(qb)
            else:
                chain[-1] = qb
            return finish(Connector(chain, _path_length(chain), residual), None)

        gc = g[cur]
        nbr = np.array(cur, dtype=np.int64) + _OFFSETS
        ok = np.all((nbr >= lo_idx) & (nbr <= hi_idx), axis=1)
        pos = pa + nbr * step
        clear = np.zeros(len(nbr), bool)
        if np.any(ok):
            # a move needs its end and its midpoint clear (no corner cutting)
            mid = pa + (np.array(cur, dtype=np.float64) + 0.5 * _OFFSETS[ok]) * step
            both = clearance_many(grid, np.vstack([pos[ok], mid])) >= sp.d_min
            m = int(np.count_nonzero(ok))
            clear[ok] = both[:m] & both[m:]
        sel = []
        for k in np.flatnonzero(clear):
            key = (int(nbr[k, 0]), int(nbr[k, 1]), int(nbr[k, 2]))
            if key in closed:
                continue
            cand = gc + float(_STEP_LEN[k]) * step
            if cand >= g.get(key, math.inf):
                continue
            sel.append((int(k), key, cand))
        if not sel:
            continue
        P = pos[[k for k, _, _ in sel]]
        TH, PS = lift_many(P, qa, qb)
        plist = P.tolist()
        for i, (_, key, _) in enumerate(sel):
            if key == goal:
                TH[i], PS[i] = qb.theta, qb.psi
        verdicts = [None] * len(sel)
        if sp.visibility:
            idents = [(tuple(plist[i]), float(TH[i]), float(PS[i])) for i in range(len(sel))]
            miss = []
            for i, ident in enumerate(idents):
                v = cache.lookup(ident) if cache is not None else None
                if v is None:
                    miss.append(i)
                else:
                    verdicts[i] = v
            if miss:
                dirty = _kernels.occ_many(P[miss], TH[miss], PS[miss], *shape, obstacles)
                counters.occ_evals += len(miss)
                for i, d in zip(miss, dirty):
                    q = CameraConfig(*idents[i])
                    if d:
                        saw_dirty = True
                        v = attitude_correct(q, grid, frustum, sp.n_bis, counters)
                        v = False if v is None else v
                    else:
                        v = q
                    verdicts[i] = v
                    if cache is not None:
                        cache.store(idents[i], v)
        else:
            verdicts = [CameraConfig(tuple(plist[i]), float(TH[i]), float(PS[i])) for i in range(len(sel))]
        for (k, key, cand), q in zip(sel, verdicts):
            if q is False:
                continue
            p = pos[k]
            g[key] = cand
            parent[key] = cur
            att[key] = q
            f = cand + sp.lambda_heu * float(np.linalg.norm(p - goal_pos))
            heapq.heappush(heap, (f, next(tie), key))
    return finish(None, OCCLUDED if saw_dirty else UNREACHABLE)


def straight_connector(qa: CameraConfig, qb: CameraConfig, step: float) -> Connector:
    """Lattice-free straight segment with lifted attitudes (no checks)."""
    n = max(1, int(math.ceil(np.linalg.norm(qb.position - qa.position) / step)))
    out = [qa]
    for i in range(1, n):
        p = qa.position + (qb.position - qa.position) * (i / n)
        out.append(CameraConfig(tuple(p), *lift(p, qa, qb)))
    out.append(qb)
    return Connector(out, _path_length(out))


EDGE_POS_STEP = 0.05
EDGE_ANG_STEP = math.radians(1.0)


def edge_samples(a: CameraConfig, b: CameraConfig) -> int:
    dp = float(np.linalg.norm(b.position - a.position))
    da = max(abs(b.theta - a.theta), abs(wrap_angle(b.psi - a.psi)))
    return max(1, int(math.ceil(max(dp / EDGE_POS_STEP, da / EDGE_ANG_STEP))))


def edge_clean(a: CameraConfig, b: CameraConfig, grid, frustum) -> bool:
    """Interior samples of the blended motion a -> b are all clean."""
    pts = grid.centers("obstacle")
    if len(pts) == 0:
        return True
    n = edge_samples(a, b)
    return not any(vis.occ_among(interp_config(a, b, i / n), pts, frustum) for i in range(1, n))


BRIDGE_DEPTH = 3


def _bridge(a: CameraConfig, b: CameraConfig, grid, frustum, depth: int) -> list | None:
    """Configurations to insert between a and b so every blended edge is clean."""
    if edge_clean(a, b, grid, frustum):
        return []
    corners = (
        CameraConfig(a.p, b.theta, a.psi),
        CameraConfig(a.p, a.theta, b.psi),
        CameraConfig(b.p, b.theta, a.psi),
        CameraConfig(b.p, a.theta, b.psi),
    )
    for c in corners:
        if (
            not vis.occ(c, grid, frustum)
            and edge_clean(a, c, grid, frustum)
            and edge_clean(c, b, grid, frustum)
        ):
            return [c]
    if depth == 0:
        return None
    m = interp_config(a, b, 0.5)
    if vis.occ(m, grid, frustum):
        m = attitude_correct(m, grid, frustum)
        if m is None:
            return None
    left = _bridge(a, m, grid, frustum, depth - 1)
    right = _bridge(m, b, grid, frustum, depth - 1) if left is not None else None
    if right is None:
        return None
    return [*left, m, *right]


def bridge_edges(configs, grid, frustum, depth: int = BRIDGE_DEPTH) -> list:
    """Insert attitudes where blending two clean nodes passes a dirty one.

    Neighbouring nodes may have been corrected about different axes; the
    straight blend between them can re-admit the occluder. Rotating one axis
    at a time through a clean corner avoids that; failing a corner, the edge
    is split at a corrected midpoint, up to ``depth`` times. Edges that still
    cannot be cleaned are left as they are.
    """
    if not configs:
        return []
    out = [configs[0]]
    for a, b in zip(configs[:-1], configs[1:]):
        extra = _bridge(a, b, grid, frustum, depth)
        if extra:
            out.extend(extra)
        out.append(b)
    return out


def validate_connector(conn: Connector, grid, frustum, d_min, check_occ=True) -> tuple[bool, bool]:
    """(all clear, all clean) re-check over every connector configuration."""
    pts = conn.positions
    clear = bool(np.all(clearance_many(grid, pts) >= d_min - 1e-9))
    clean = True
    if check_occ:
        clean = not any(vis.occ(q, grid, frustum) for q in conn.configs)
    return clear, clean


def occluded_fraction(conn: Connector, grid, frustum) -> float:
    if not conn.configs:
        return 0.0
    return sum(vis.occ(q, grid, frustum) for q in conn.configs) / len(conn.configs)
