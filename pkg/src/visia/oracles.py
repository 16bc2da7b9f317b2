"""Independent brute-force cross-checks for the fast algorithms.

Every suite draws seeded random instances, solves each one twice (the
production routine and a slow reference written without reusing it), and
returns an :class:`OracleReport`. Suites accept an ``impl`` argument so a
deliberately broken implementation can be substituted to prove the suite
actually catches faults.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import repair, tour
from .geom import (
    PITCH_MAX,
    PITCH_MIN,
    CameraConfig,
    FrustumParams,
    camera_axes,
    make_frustum,
    shift_offsets,
)
from .phiastar import SearchParams, search
from .sim import chamfer
from .world import VoxelGrid

DEFAULT_SIZES = {"sweep": 1000, "shift-bound": 200, "phiastar": 50, "sop": 100, "chamfer": 100}
SCAN_STEP = 1e-3
SOP_GAP = 0.10


@dataclass
class OracleReport:
    suite: str
    n: int
    failures: int = 0
    counterexample: dict | None = None
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "n": self.n,
            "passed": self.passed,
            "failures": self.failures,
            "counterexample": self.counterexample,
            "stats": self.stats,
        }


def _num(v):
    return None if v is None else (float(v) if math.isfinite(v) else str(v))


# ---------------------------------------------------------------- sweep


def scan_shift(intervals, s_lb: float) -> tuple[float, int]:
    """Try every clipped left endpoint (and s_lb itself); smallest best wins."""
    clipped = [(max(lo, s_lb), hi) for lo, hi in intervals if max(lo, s_lb) <= hi]
    cands = sorted({s_lb, *(lo for lo, _ in clipped)})
    best_s, best = s_lb, 0
    for s in cands:
        k = sum(1 for lo, hi in clipped if lo <= s <= hi)
        if k > best:
            best_s, best = s, k
    return best_s, best


def _random_intervals(rng, n):
    out = []
    for _ in range(n):
        kind = rng.random()
        lo = float(rng.integers(0, 16)) if rng.random() < 0.6 else float(rng.uniform(0, 15))
        if kind < 0.1:
            hi = lo  # degenerate point
        elif kind < 0.2:
            hi = lo - float(rng.uniform(0.1, 3))  # empty
        else:
            hi = lo + (float(rng.integers(0, 6)) if rng.random() < 0.6 else float(rng.uniform(0, 5)))
        if rng.random() < 0.05:
            lo = -math.inf
        if rng.random() < 0.05:
            hi = math.inf
        out.append((lo, hi))
    return out


def _sweep_mismatch(intervals, s_lb, impl):
    got = impl(intervals, s_lb)
    want = scan_shift(intervals, s_lb)
    if got[1] != want[1] or got[0] != want[0]:
        return got, want
    return None


def sweep_suite(n: int = 1000, seed: int = 0, impl=None) -> OracleReport:
    """Interval sweep against the endpoint scan: count and shift must match exactly."""
    impl = impl or repair.optimal_shift
    rng = np.random.default_rng(seed)
    rep = OracleReport("sweep", n)
    for _ in range(n):
        ivs = _random_intervals(rng, int(rng.integers(0, 13)))
        s_lb = float(rng.choice([0.0, float(rng.integers(0, 10)), float(rng.uniform(0, 10))]))
        if _sweep_mismatch(ivs, s_lb, impl) is None:
            continue
        rep.failures += 1
        if rep.counterexample is None:
            # greedy shrink: drop intervals while the disagreement persists
            shrunk = list(ivs)
            i = 0
            while i < len(shrunk):
                trial = shrunk[:i] + shrunk[i + 1 :]
                if _sweep_mismatch(trial, s_lb, impl) is not None:
                    shrunk = trial
                else:
                    i += 1
            got, want = _sweep_mismatch(shrunk, s_lb, impl)
            rep.counterexample = {
                "intervals": [[_num(a), _num(b)] for a, b in shrunk],
                "s_lb": s_lb,
                "got": [got[0], got[1]],
                "expected": [want[0], want[1]],
            }
    return rep


# ---------------------------------------------------------- shift bound


def scan_expulsion(hs, d, x, d_min: float, step: float = SCAN_STEP, s_max: float = 40.0):
    """First shift on a ``step`` grid at which some plane clears ``x`` by d_min."""
    s = np.arange(0.0, s_max + step, step)
    worst = -math.inf * np.ones(len(s))
    x = np.asarray(x, float)
    shifted = shift_offsets(hs, d, 1.0)
    for m in range(len(hs.offsets)):
        # plane value is affine in s; evaluate at 0 and 1 to get the slope
        v0 = float(hs.normals[m] @ x + hs.offsets[m])
        v1 = float(shifted.normals[m] @ x + shifted.offsets[m])
        worst = np.maximum(worst, v0 + s * (v1 - v0))
    hit = np.flatnonzero(worst >= d_min)
    return float(s[hit[0]]) if len(hit) else math.inf


def shift_bound_suite(n: int = 200, seed: int = 0, impl=None, d_min: float = 0.2) -> OracleReport:
    """Analytic expulsion shift against a 1 mm scan, one obstacle per frustum."""
    impl = impl or repair.s_lower_bound
    rng = np.random.default_rng(seed)
    params = FrustumParams.from_degrees(80.0, 65.0, 7.0)
    rep = OracleReport("shift-bound", n)
    worst_err = 0.0
    done = 0
    while done < n:
        q = CameraConfig(
            tuple(rng.uniform(-5, 5, 3)),
            float(rng.uniform(math.radians(-60), math.radians(25))),
            float(rng.uniform(-math.pi, math.pi)),
        )
        hs = make_frustum(q, params)
        # a point inside the frustum: random bearing within the field of view
        r = float(rng.uniform(0.5, 6.5))
        bh = float(rng.uniform(-0.45, 0.45)) * params.alpha_h
        bv = float(rng.uniform(-0.45, 0.45)) * params.alpha_v
        fwd = q.direction
        F = camera_axes(q.theta, q.psi)
        local = np.array([1.0, math.tan(bh), math.tan(bv)])
        x = q.position + F @ (r * local / np.linalg.norm(local))
        if not hs.contains(x.reshape(1, 3))[0]:
            continue
        d = fwd if rng.random() < 0.5 else rng.normal(size=3)
        d = d / np.linalg.norm(d)
        got = impl(hs, d, x.reshape(1, 3), d_min)
        want = scan_expulsion(hs, d, x, d_min)
        if not math.isfinite(got) and not math.isfinite(want):
            done += 1
            continue
        err = abs(got - want) if math.isfinite(got) and math.isfinite(want) else math.inf
        if got >= 40.0 - SCAN_STEP or want >= 40.0 - SCAN_STEP:
            continue  # beyond the scanned range; not comparable
        worst_err = max(worst_err, err)
        done += 1
        if err > SCAN_STEP + 1e-9:
            rep.failures += 1
            if rep.counterexample is None:
                rep.counterexample = {
                    "config": [list(q.p), q.theta, q.psi],
                    "direction": d.tolist(),
                    "obstacle": x.tolist(),
                    "got": _num(got),
                    "expected": _num(want),
                }
    rep.stats["max_abs_error_m"] = worst_err
    return rep


# -------------------------------------------------------------- phi-A*


def _inside(p, theta, psi, pts, params: FrustumParams) -> bool:
    """Bearing-box frustum test written independently of the plane kernels."""
    if len(pts) == 0:
        return False
    ct, st, cp, sp = math.cos(theta), math.sin(theta), math.cos(psi), math.sin(psi)
    rel = pts - p
    fwd = rel @ np.array([ct * cp, ct * sp, st])
    lat = rel @ np.array([-sp, cp, 0.0])
    ver = rel @ np.array([-st * cp, -st * sp, ct])
    ta, tb = math.tan(0.5 * params.alpha_h), math.tan(0.5 * params.alpha_v)
    inside = (fwd > 0) & (fwd <= params.r_max) & (np.abs(lat) <= fwd * ta) & (np.abs(ver) <= fwd * tb)
    return bool(np.any(inside))


def _admissible_attitudes(theta, psi, step=math.radians(5.0), bound=math.radians(30.0)):
    """5-degree lattice within the correction box, plus the pitch stops."""
    n = int(round(bound / step))
    out = []
    for i in range(-n, n + 1):
        th = theta + i * step
        if PITCH_MIN - 1e-12 <= th <= PITCH_MAX + 1e-12:
            for j in range(-n, n + 1):
                out.append((th, psi + j * step))
    for stop in (PITCH_MIN, PITCH_MAX):
        if 0.0 < abs(stop - theta) < bound:
            out.append((stop, psi))
    return out


def _blend(a, b, rho):
    dpsi = (b[1] - a[1] + math.pi) % (2 * math.pi) - math.pi
    return a[0] + rho * (b[0] - a[0]), a[1] + rho * dpsi


def bfs_feasible(grid: VoxelGrid, qa: CameraConfig, qb: CameraConfig, step: float, d_min: float,
                 params: FrustumParams) -> bool:
    """Breadth-first reachability over (lattice position, admissible attitude).

    The goal must lie on the lattice anchored at ``qa``. A move is allowed
    when its midpoint clears every occupied voxel by ``d_min``; a position is
    usable when it is inside the map, clears every occupied voxel too, and
    at least one admissible attitude around its interpolated attitude (the
    goal attitude at the goal) sees no obstacle.
    """
    pa, pb = qa.position, qb.position
    goal = tuple(int(v) for v in np.round((pb - pa) / step))
    occ_pts = np.vstack([grid.centers("target"), grid.centers("obstacle")])
    obs = grid.centers("obstacle")
    half = 0.5 * grid.resolution * math.sqrt(3.0)
    lo, hi = grid.origin, grid.bounds_max

    def clear(p):
        return not (len(occ_pts) and float(np.min(np.linalg.norm(occ_pts - p, axis=1))) - half < d_min)

    def usable(key):
        p = pa + np.array(key) * step
        if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
            return False
        if not clear(p):
            return False
        if key == goal:
            base = qb.attitude
        else:
            da, db = float(np.linalg.norm(p - pa)), float(np.linalg.norm(p - pb))
            base = _blend(qa.attitude, qb.attitude, da / (da + db))
        if not _inside(p, base[0], base[1], obs, params):
            return True
        return any(not _inside(p, th, ps, obs, params) for th, ps in _admissible_attitudes(*base))

    offsets = [o for o in itertools.product((-1, 0, 1), repeat=3) if any(o)]
    seen = {(0, 0, 0)}
    queue = deque([(0, 0, 0)])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            return True
        for o in offsets:
            nxt = (cur[0] + o[0], cur[1] + o[1], cur[2] + o[2])
            if nxt in seen:
                continue
            mid = pa + (np.array(cur) + 0.5 * np.array(o)) * step
            if not clear(mid):
                continue  # the move cuts a corner; nxt may still be reached otherwise
            seen.add(nxt)
            if usable(nxt):
                queue.append(nxt)
    return False


def _random_instance(rng, res=0.25):
    nx, ny, nz = (int(v) for v in rng.integers([10, 10, 6], [21, 21, 13]))
    grid = VoxelGrid(res, (0.0, 0.0, 0.0), (nx * res, ny * res, nz * res))
    idx = []
    for _ in range(int(rng.integers(2, 7))):
        a = rng.integers([0, 0, 0], [nx, ny, nz])
        ext = rng.integers(1, [max(2, nx // 3), max(2, ny // 3), nz + 1])
        b = np.minimum(a + ext, [nx, ny, nz])
        for i in range(a[0], b[0]):
            for j in range(a[1], b[1]):
                for k in range(a[2], b[2]):
                    idx.append((i, j, k))
    if idx:
        grid.set_labels(np.array(sorted(set(idx))), 3)
    return grid


def phiastar_suite(n: int = 50, seed: int = 0, impl=None) -> OracleReport:
    """Connector search verdicts against breadth-first reachability (grids <= 20^3)."""
    rng = np.random.default_rng(seed)
    params = FrustumParams.from_degrees(80.0, 65.0, 2.0)
    step, d_min = 0.25, 0.2
    sp = SearchParams(delta_p=step, d_min=d_min, lambda_heu=10.0)
    run = impl or (lambda qa, qb, grid: search(qa, qb, grid, params, sp).ok)
    rep = OracleReport("phiastar", n)
    verdicts = {"feasible": 0, "infeasible": 0}
    done = 0
    while done < n:
        grid = _random_instance(rng)
        shape = np.array(grid.shape)
        a = rng.integers(0, shape)
        b = rng.integers(0, shape)
        if np.array_equal(a, b):
            continue
        pa = grid.center_of(tuple(a))
        pb = grid.center_of(tuple(b))
        if grid.label_at(tuple(a)) or grid.label_at(tuple(b)):
            continue
        qa = CameraConfig(tuple(pa), float(rng.uniform(-0.5, 0.4)), float(rng.uniform(-math.pi, math.pi)))
        qb = CameraConfig(tuple(pb), float(rng.uniform(-0.5, 0.4)), float(rng.uniform(-math.pi, math.pi)))
        want = bfs_feasible(grid, qa, qb, step, d_min, params)
        got = bool(run(qa, qb, grid))
        verdicts["feasible" if want else "infeasible"] += 1
        done += 1
        if got != want:
            rep.failures += 1
            size = int(np.prod(shape))
            if rep.counterexample is None or size < rep.counterexample["voxels"]:
                rep.counterexample = {
                    "voxels": size,
                    "shape": shape.tolist(),
                    "obstacles": grid.voxel_indices("obstacle").tolist(),
                    "start": [list(qa.p), qa.theta, qa.psi],
                    "goal": [list(qb.p), qb.theta, qb.psi],
                    "search": got,
                    "bfs": want,
                }
    rep.stats.update(verdicts)
    return rep


# ------------------------------------------------------------------ SOP


def enumerate_tours(problem: tour.TourProblem) -> tuple[float, list]:
    """Cheapest feasible order by listing every permutation (vectorized)."""
    inner = [*problem.anchors, *problem.free]
    c = problem.cost
    if not inner:
        order = [problem.start] + ([problem.end] if problem.end is not None else [])
        return (float(c[order[0], order[-1]]) if len(order) > 1 else 0.0), order
    perms = np.array(list(itertools.permutations(inner)), dtype=np.int64)
    if len(problem.anchors) > 1:
        where = {node: np.argmax(perms == node, axis=1) for node in problem.anchors}
        ok = np.ones(len(perms), bool)
        for a, b in zip(problem.anchors, problem.anchors[1:]):
            ok &= where[a] < where[b]
        perms = perms[ok]
    cost = c[problem.start, perms[:, 0]] + c[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    if problem.end is not None:
        cost = cost + c[perms[:, -1], problem.end]
    k = int(np.argmin(cost))
    order = [problem.start, *perms[k].tolist()] + ([problem.end] if problem.end is not None else [])
    return float(cost[k]), order


def sop_suite(n: int = 100, seed: int = 0, impl=None, max_nodes: int = 9) -> OracleReport:
    """Ordering heuristic against enumeration: always feasible, within 10% of optimal."""
    impl = impl or (lambda prob: tour.reorder(prob))
    rng = np.random.default_rng(seed)
    rep = OracleReport("sop", n)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(3, max_nodes + 1))
        pts = rng.uniform(0, 10, size=(m, 3))
        rest = list(rng.permutation(np.arange(1, m)))
        end = int(rest.pop()) if rng.random() < 0.3 else None
        k = int(rng.integers(0, len(rest) + 1))
        anchors = [int(v) for v in rest[:k]]
        free = [int(v) for v in rest[k:]]
        prob = tour.TourProblem.from_points(pts, anchors, free, 0, end)
        best, _ = enumerate_tours(prob)
        sol = impl(prob)
        ok = tour.feasible(sol.order, prob)
        got = tour.tour_cost(sol.order, prob.cost) if ok else math.inf
        gap = (got - best) / best if best > 0 else 0.0
        worst = max(worst, gap)
        if not ok or gap > SOP_GAP:
            rep.failures += 1
            if rep.counterexample is None or m < len(rep.counterexample["points"]):
                rep.counterexample = {
                    "points": pts.round(6).tolist(),
                    "anchors": anchors,
                    "free": free,
                    "end": end,
                    "order": [int(v) for v in sol.order],
                    "feasible": ok,
                    "gap": _num(gap),
                }
    rep.stats["max_gap"] = worst
    return rep


# -------------------------------------------------------------- chamfer


def chamfer_loops(a, b) -> float:
    """Symmetric mean nearest distance with two nested loops."""

    def one_way(src, dst):
        total = 0.0
        for x in src:
            total += min(math.dist(x, y) for y in dst)
        return total / len(src)

    return one_way(a, b) + one_way(b, a)


def chamfer_suite(n: int = 100, seed: int = 0, impl=None, rtol: float = 1e-12) -> OracleReport:
    """Tree-based Chamfer against the double loop (agreement to rounding)."""
    impl = impl or chamfer
    rng = np.random.default_rng(seed)
    rep = OracleReport("chamfer", n)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 4))
        a = rng.uniform(-5, 5, size=(int(rng.integers(1, 40)), dim))
        b = rng.uniform(-5, 5, size=(int(rng.integers(1, 40)), dim))
        if rng.random() < 0.1:
            b = a.copy()
        got = impl(a, b)
        want = chamfer_loops(a.tolist(), b.tolist())
        err = abs(got - want)
        worst = max(worst, err)
        if err > rtol * max(1.0, abs(want)):
            rep.failures += 1
            if rep.counterexample is None or len(a) + len(b) < sum(map(len, rep.counterexample["sets"])):
                rep.counterexample = {"sets": [a.tolist(), b.tolist()], "got": got, "expected": want}
    rep.stats["max_abs_error"] = worst
    return rep


SUITES = {
    "sweep": sweep_suite,
    "shift-bound": shift_bound_suite,
    "phiastar": phiastar_suite,
    "sop": sop_suite,
    "chamfer": chamfer_suite,
}


def run_suites(names=None, n: int | None = None, seed: int = 0) -> list[OracleReport]:
    names = list(SUITES) if not names else list(names)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    return [SUITES[s](n=n if n is not None else DEFAULT_SIZES[s], seed=seed) for s in names]
