"""Receding-horizon repair of a scan path.

The replanner watches the stretch of path ahead of the vehicle, and when
newly mapped obstacles break clearance or sensing cleanliness it rebuilds
that window: repair invalid viewpoints, complete coverage, reorder, and
connect consecutive viewpoints with clean segments.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import phiastar, repair, tour, vis
from .geom import CameraConfig, FrustumParams, interp_config, wrap_angle
from .path import VIEWPOINT, WAYPOINT, PathNode, ScanPath
from .world import OBSTACLE, TARGET, SurfaceModel, VoxelGrid, clearance_many, min_clearance

log = logging.getLogger(__name__)

VISIBILITY_AWARE = "visibility-aware"
CLEARANCE_ONLY = "clearance-only"
MODES = (VISIBILITY_AWARE, CLEARANCE_ONLY)

STAGES = ("classify", "repair", "select", "complete", "reorder", "connect")
# share of the budget by which candidate generation and completion must stop;
# connection may use whatever is left
REPAIR_SHARE = 0.6
COMPLETE_SHARE = 0.7
OCC_SAMPLE_STEP = 0.25


@dataclass
class PlannerParams:
    d_min: float = 0.2
    lambda_d: float = 5.0
    horizon: float = 10.0
    budget_ms: float | None = 50.0
    template_step_deg: float = 15.0
    delta_p: float = 0.1
    lambda_heu: float = 10.0
    n_bis: int = 10
    cache_deg: float = 5.0
    refresh_s: float = 1.0
    frame_rate: float = 10.0
    enforce_budget: bool = True
    mode: str = VISIBILITY_AWARE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def visibility(self) -> bool:
        return self.mode == VISIBILITY_AWARE

    @property
    def effective_budget_ms(self):
        return self.budget_ms if self.enforce_budget else None

    @classmethod
    def from_scenario(cls, sc, mode=VISIBILITY_AWARE, **overrides):
        kw = {k: v for k, v in sc.planner.items() if k in cls.__dataclass_fields__}
        kw.update(overrides)
        return cls(mode=mode, **kw)


@dataclass
class ReplanWindow:
    i_s: int
    i_e: int
    horizon: float
    anchored_exit: bool = True


@dataclass
class ReplanReport:
    status: str = "identity"  # identity | ok | degraded
    trigger: str | None = None
    window: tuple = (0, 0)
    invalid: list = field(default_factory=list)
    unrepaired: list = field(default_factory=list)
    added: int = 0
    dirty_connectors: int = 0
    dirty_edges: int = 0
    partial_connectors: int = 0
    budget_hit: bool = False
    entry_dirty: bool = False
    residual: list = field(default_factory=list)
    nominal_achievable: int = 0
    repaired_achievable: int = 0
    stage_ms: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    total_ms: float = 0.0

    def as_dict(self, timing: bool = True) -> dict:
        d = {
            "status": self.status,
            "trigger": self.trigger,
            "window": list(self.window),
            "invalid": list(self.invalid),
            "unrepaired": list(self.unrepaired),
            "added": self.added,
            "dirty_connectors": self.dirty_connectors,
            "dirty_edges": self.dirty_edges,
            "partial_connectors": self.partial_connectors,
            "entry_dirty": self.entry_dirty,
            "residual": list(self.residual),
            "nominal_achievable": self.nominal_achievable,
            "repaired_achievable": self.repaired_achievable,
        }
        if timing:
            d["budget_hit"] = self.budget_hit
            d["stage_ms"] = dict(self.stage_ms)
            d["total_ms"] = self.total_ms
        return d


# -- window bookkeeping ------------------------------------------------------------


def extract_window(path: ScanPath, exec_idx: int, horizon: float) -> ReplanWindow:
    if not 0 <= exec_idx < len(path):
        raise IndexError("exec_idx outside path")
    arc = path.arc_lengths()
    base = arc[exec_idx]
    i_e = exec_idx
    while i_e < len(path) - 1 and arc[i_e] - base < horizon:
        i_e += 1
    return ReplanWindow(exec_idx, i_e, horizon)


def splice(path: ScanPath, window: ReplanWindow, repaired) -> ScanPath:
    if not repaired:
        raise ValueError("repaired window is empty")
    if window.anchored_exit and not repaired[-1].same_as(path[window.i_e]):
        raise ValueError("repaired window does not end at the window exit")
    first = repaired[0]
    if first.origin != "current" and not first.same_as(path[window.i_s]):
        raise ValueError("repaired window does not start at the window entry")
    return ScanPath(list(path[: window.i_s]) + list(repaired) + list(path[window.i_e + 1 :]))


# -- kinematic timing ------------------------------------------------------------------


@dataclass
class TimedTrajectory:
    nodes: list
    times: np.ndarray  # arrival time at each node
    durations: np.ndarray  # per edge

    @property
    def total(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    def locate(self, t: float) -> tuple[int, float]:
        """Edge index and fraction for time t (clamped to the end)."""
        if len(self.nodes) == 1 or t >= self.total:
            return max(len(self.nodes) - 2, 0), 1.0 if len(self.nodes) > 1 else 0.0
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), len(self.durations) - 1)
        return k, (t - self.times[k]) / self.durations[k]

    def config_at(self, t: float) -> CameraConfig:
        k, rho = self.locate(t)
        if len(self.nodes) == 1:
            return self.nodes[0].config
        return interp_config(self.nodes[k].config, self.nodes[k + 1].config, rho)


def edge_duration(a: CameraConfig, b: CameraConfig, v_max: float, omega_max: float) -> float:
    dp = float(np.linalg.norm(b.position - a.position))
    dth = abs(b.theta - a.theta)
    dps = abs(wrap_angle(b.psi - a.psi))
    return max(dp / v_max, dth / omega_max, dps / omega_max)


def dedupe(nodes) -> list:
    """Merge consecutive nodes with identical configuration (viewpoints win)."""
    out = []
    for n in nodes:
        if out and out[-1].config == n.config:
            if n.is_viewpoint and not out[-1].is_viewpoint:
                out[-1] = n
            continue
        out.append(n)
    return out


def time_parameterize(nodes, v_max: float, omega_max: float) -> TimedTrajectory:
    if not (v_max > 0 and omega_max > 0):
        raise ValueError("velocity limits must be positive")
    nodes = dedupe(nodes)
    dur = np.array(
        [edge_duration(a.config, b.config, v_max, omega_max) for a, b in zip(nodes[:-1], nodes[1:])]
    )
    times = np.concatenate([[0.0], np.cumsum(dur)]) if len(dur) else np.zeros(1)
    return TimedTrajectory(list(nodes), times, dur)


# -- replanner -------------------------------------------------------------------------


_warm = False


def warm_up() -> None:
    """Exercise every compiled kernel once per process.

    Loading compiled code happens on first use; doing it here keeps that
    one-off cost out of the first replan's latency.
    """
    global _warm
    if _warm:
        return
    grid = VoxelGrid(0.25, (0.0, 0.0, 0.0), (4.0, 3.0, 2.0))
    grid.set_labels(np.array([[14, 6, 4], [14, 7, 4]]), TARGET)
    grid.set_labels(np.array([[8, 6, 4]]), OBSTACLE)
    surface = SurfaceModel.from_grid(grid)
    frustum = FrustumParams.from_degrees(80.0, 65.0, 7.0)
    qa = CameraConfig((0.5, 1.6, 1.1), 0.0, 0.0)
    qb = CameraConfig((2.0, 0.6, 1.1), 0.0, 0.0)
    vis.visible_elements(qa, np.arange(len(surface)), grid, surface, frustum)
    # bisection, lattice and failure paths of the attitude correction
    for psi in np.linspace(-1.0, 1.0, 9):
        for theta in (-0.6, 0.0, 0.4):
            q = CameraConfig((1.0, 1.6, 1.1), theta, float(psi))
            if vis.occ(q, grid, frustum):
                phiastar.attitude_correct(q, grid, frustum)
    phiastar.search(qa, qb, grid, frustum, phiastar.SearchParams(delta_p=0.25))
    path = ScanPath([PathNode(qa, VIEWPOINT, np.arange(len(surface)), nominal_id=0)])
    Replanner(surface, frustum, PlannerParams(delta_p=0.25)).replan_window(
        path, ReplanWindow(0, 0, 0.0, anchored_exit=False), grid
    )
    _warm = True


class Replanner:
    def __init__(self, surface, frustum: FrustumParams, params: PlannerParams):
        self.surface = surface
        self.frustum = frustum
        self.params = params
        step = math.radians(params.template_step_deg)
        self.template = repair.build_template(
            frustum, min(step, frustum.alpha_v), min(step, frustum.alpha_h)
        )
        self.cache = phiastar.VisCache(params.delta_p, math.radians(params.cache_deg))
        # connector edges that bridging could not clean, valid for one map version;
        # re-triggering on them would only rebuild the same connector
        self._accepted = set()
        self._accepted_version = None

    # -- checks ----------------------------------------------------------------------

    def _node_violation(self, node, grid):
        p = self.params
        if min_clearance(grid, node.config.p) < p.d_min:
            return "clearance"
        if not p.visibility:
            return None
        if node.is_viewpoint:
            if node.intended is not None and not vis.is_qualified(
                node, grid, self.surface, self.frustum, p.d_min
            ):
                return "occlusion"
        elif vis.occ(node.config, grid, self.frustum):
            return "waypoint_occ"
        return None

    def _edge_violation(self, a: CameraConfig, b: CameraConfig, grid):
        length = float(np.linalg.norm(b.position - a.position))
        step = grid.resolution
        n = int(math.ceil(length / step))
        if n > 1:
            rho = np.arange(1, n) / n
            pts = a.position + rho[:, None] * (b.position - a.position)
            if np.any(clearance_many(grid, pts) < self.params.d_min):
                return "clearance"
        if self.params.visibility:
            n = int(math.ceil(length / OCC_SAMPLE_STEP))
            for i in range(1, n):
                if vis.occ(interp_config(a, b, i / n), grid, self.frustum):
                    return "waypoint_occ"
        return None

    def _is_accepted(self, a: CameraConfig, b: CameraConfig, grid) -> bool:
        return self._accepted_version == grid.version and (a, b) in self._accepted

    def _accept(self, a: CameraConfig, b: CameraConfig, grid):
        if self._accepted_version != grid.version:
            self._accepted = set()
            self._accepted_version = grid.version
        self._accepted.add((a, b))

    def should_replan(self, path, exec_idx, grid, entry: CameraConfig | None = None):
        """First violation within the horizon ahead, or None."""
        win = extract_window(path, exec_idx, self.params.horizon)
        prev = entry
        for i in range(win.i_s, win.i_e + 1):
            node = path[i]
            why = self._node_violation(node, grid)
            if why:
                return why
            if prev is not None:
                why = self._edge_violation(prev, node.config, grid)
                if why == "waypoint_occ":
                    # the entry lies on edge (i-1, i) when it is the first one checked
                    a = path[i - 1].config if prev is entry and i > 0 else prev
                    if self._is_accepted(a, node.config, grid):
                        why = None
                if why:
                    return why
            prev = node.config
        return None

    def _node_ok(self, node, grid) -> bool:
        return self._node_violation(node, grid) is None

    # -- pipeline ----------------------------------------------------------------------

    def replan(self, path: ScanPath, exec_idx: int, grid, entry: CameraConfig | None = None, trigger=None):
        """Repair the window ahead of ``exec_idx``; returns (new path, window, report)."""
        win = extract_window(path, exec_idx, self.params.horizon)
        while not self._node_ok(path[win.i_e], grid) and win.i_e < len(path) - 1:
            win.i_e += 1
        win.anchored_exit = self._node_ok(path[win.i_e], grid)
        repaired, report = self.replan_window(path, win, grid, entry)
        report.trigger = trigger
        if report.status == "identity":
            return path, win, report
        return splice(path, win, repaired), win, report

    def replan_window(self, path, win: ReplanWindow, grid, entry: CameraConfig | None = None):
        P = self.params
        t0 = time.perf_counter()
        budget = P.effective_budget_ms
        report = ReplanReport(window=(win.i_s, win.i_e))
        nodes = list(path[win.i_s : win.i_e + 1])

        def deadline(frac):
            return None if budget is None else t0 + frac * budget / 1000.0

        def lap(stage, since):
            now = time.perf_counter()
            report.stage_ms[stage] += 1000.0 * (now - since)
            return now

        def done(out):
            report.total_ms = 1000.0 * (time.perf_counter() - t0)
            if budget is not None and report.total_ms > budget:
                report.budget_hit = True
            return out, report

        if budget is not None and budget <= 0:
            report.status = "degraded"
            report.budget_hit = True
            return done(nodes)

        if entry is None:
            entry_node = nodes[0]
            body = nodes[1:]
        else:
            entry_node = PathNode(entry, WAYPOINT, origin="current")
            body = nodes
        exit_node = None
        if win.anchored_exit and body:
            exit_node = body[-1]
            body = body[:-1]
        if P.visibility:
            report.entry_dirty = vis.occ(entry_node.config, grid, self.frustum)

        # -- classify
        t = time.perf_counter()
        vp_nodes = [n for n in body if n.is_viewpoint]
        all_vps = vp_nodes + ([exit_node] if exit_node is not None and exit_node.is_viewpoint else [])
        if entry is None and entry_node.is_viewpoint:
            all_vps = [entry_node] + all_vps
        universe = (
            np.unique(np.concatenate([n.intended for n in all_vps])) if all_vps else np.zeros(0, int)
        )
        qual, inv = [], []
        for n in vp_nodes:
            (qual if self._node_ok(n, grid) else inv).append(n)
        nominal_cov = self._achievable(all_vps, universe, grid)
        report.nominal_achievable = int(nominal_cov.sum())
        report.invalid = [self._label(n) for n in inv]
        t = lap("classify", t)

        chain = [entry_node] + body + ([exit_node] if exit_node is not None else [])
        if not inv and self._chain_ok(chain, grid):
            report.repaired_achievable = report.nominal_achievable
            return done(nodes)

        # -- repair
        pools = {}
        if P.visibility:
            settings = repair.RepairSettings(P.d_min, P.n_bis, self.template)
            for j, n in enumerate(inv):
                pools[j] = repair.repair_viewpoint(
                    n, j, universe, grid, self.surface, self.frustum, settings, deadline(REPAIR_SHARE)
                )
        t = lap("repair", t)

        # -- select
        replacements = {}
        if P.visibility:
            masks = {j: np.isin(universe, n.intended) for j, n in enumerate(inv)}
            nominal_p = {j: n.config.position for j, n in enumerate(inv)}
            chosen = repair.select_replacements(pools, masks, nominal_p, P.lambda_d)
            for j, n in enumerate(inv):
                c = chosen[j]
                if c is None:
                    report.unrepaired.append(self._label(n))
                    continue
                ids = universe[c.cov & masks[j]]
                replacements[j] = PathNode(c.config, VIEWPOINT, ids, "replacement", n.nominal_id)
        else:
            for j, n in enumerate(inv):
                q = repair.clear_lattice_position(n.config, grid, P.d_min, grid.resolution)
                if q is None:
                    report.unrepaired.append(self._label(n))
                    continue
                replacements[j] = PathNode(q, VIEWPOINT, n.intended, "replacement", n.nominal_id)
        t = lap("select", t)

        # -- complete
        extras = []
        if P.visibility:
            current = qual + list(replacements.values())
            if exit_node is not None and exit_node.is_viewpoint:
                current.append(exit_node)
            covered = self._achievable(current, universe, grid)
            chosen_ids = {id(c) for c in chosen.values() if c is not None}
            rest = [c for j in sorted(pools) for c in pools[j] if id(c) not in chosen_ids]
            picks, uncovered = repair.complete_coverage(
                rest, covered, [n.config.position for n in current], P.lambda_d, deadline(COMPLETE_SHARE)
            )
            for c in picks:
                extras.append(PathNode(c.config, VIEWPOINT, universe[c.cov], "completion"))
            report.added = len(extras)
        t = lap("complete", t)

        # -- reorder
        if P.visibility:
            order_nodes = self._reorder(entry_node, qual, list(replacements.values()) + extras, exit_node)
        else:
            order_nodes = [entry_node]
            for n in body:
                if not n.is_viewpoint:
                    continue
                j = next((k for k, m in enumerate(inv) if m is n), None)
                if j is None:
                    order_nodes.append(n)
                elif j in replacements:
                    order_nodes.append(replacements[j])
            if exit_node is not None:
                order_nodes.append(exit_node)
        t = lap("reorder", t)

        # -- connect
        out = [order_nodes[0]]
        for a, b in zip(order_nodes[:-1], order_nodes[1:]):
            seg = self._reuse(chain, a, b, grid)
            if seg is None:
                seg = self._connect(a, b, grid, deadline(1.0), report)
            out.extend(seg)
            out.append(b)
        t = lap("connect", t)

        final_vps = [n for n in out if n.is_viewpoint]
        rep_cov = self._achievable(final_vps, universe, grid)
        report.repaired_achievable = int(rep_cov.sum())
        report.residual = [int(e) for e in universe[nominal_cov & ~rep_cov]]
        degraded = (
            report.unrepaired
            or report.residual
            or report.dirty_connectors
            or report.partial_connectors
        )
        report.status = "degraded" if degraded else "ok"
        return done(out)

    # -- helpers -----------------------------------------------------------------------

    @staticmethod
    def _label(n):
        return n.nominal_id if n.nominal_id is not None else -1

    def _achievable(self, vps, universe, grid) -> np.ndarray:
        mask = np.zeros(len(universe), bool)
        for n in vps:
            ids = vis.visible_elements(n.config, universe, grid, self.surface, self.frustum)
            mask[np.searchsorted(universe, ids)] = True
        return mask

    def _chain_ok(self, chain, grid) -> bool:
        for a, b in zip(chain[:-1], chain[1:]):
            if not self._node_ok(b, grid) or self._edge_violation(a.config, b.config, grid):
                return False
        return True

    def _reorder(self, entry_node, anchors, free, exit_node):
        nodes = [entry_node] + list(anchors) + list(free)
        end = None
        if exit_node is not None:
            nodes.append(exit_node)
            end = len(nodes) - 1
        pts = np.array([n.config.p for n in nodes])
        prob = tour.TourProblem.from_points(
            pts,
            anchors=list(range(1, 1 + len(anchors))),
            free=list(range(1 + len(anchors), 1 + len(anchors) + len(free))),
            start=0,
            end=end,
        )
        sol = tour.reorder(prob)
        return [nodes[i] for i in sol.order]

    def _reuse(self, chain, a, b, grid):
        """Original intermediate waypoints between a and b, if still valid."""
        ia = next((i for i, n in enumerate(chain) if n is a), None)
        ib = next((i for i, n in enumerate(chain) if n is b), None)
        if ia is None or ib is None or ib <= ia:
            return None
        mid = chain[ia + 1 : ib]
        if any(n.is_viewpoint for n in mid):
            return None
        seq = chain[ia : ib + 1]
        for u, v in zip(seq[:-1], seq[1:]):
            if v is not b and not self._node_ok(v, grid):
                return None
            if self._edge_violation(u.config, v.config, grid):
                return None
        return list(mid)

    def _connect(self, a, b, grid, deadline, report):
        P = self.params
        remaining = None if deadline is None else max(0.0, 1000.0 * (deadline - time.perf_counter()))
        sp = phiastar.SearchParams(
            delta_p=P.delta_p,
            lambda_heu=P.lambda_heu,
            d_min=P.d_min,
            budget_ms=remaining,
            n_bis=P.n_bis,
            cache_deg=P.cache_deg,
            visibility=P.visibility,
        )
        res = phiastar.search(a.config, b.config, grid, self.frustum, sp, self.cache if P.visibility else None)
        if not res.ok and P.visibility and res.reason != phiastar.BUDGET:
            remaining = None if deadline is None else max(0.0, 1000.0 * (deadline - time.perf_counter()))
            sp.visibility = False
            sp.budget_ms = remaining
            res = phiastar.search(a.config, b.config, grid, self.frustum, sp)
            if res.ok:
                report.dirty_connectors += 1
        if not res.ok:
            report.partial_connectors += 1
            if res.reason == phiastar.BUDGET:
                report.budget_hit = True
            conn = phiastar.straight_connector(a.config, b.config, P.delta_p)
            configs = conn.configs
        else:
            configs = res.connector.configs
            if sp.visibility:
                configs = phiastar.bridge_edges(configs, grid, self.frustum)
                for u, v in zip(configs[:-1], configs[1:]):
                    if self._edge_violation(u, v, grid) == "waypoint_occ":
                        self._accept(u, v, grid)
                        report.dirty_edges += 1
        return [PathNode(q, WAYPOINT, origin="connector") for q in configs[1:-1]]
