"""Closed-loop execution: reveal, trigger, replan, advance; plus metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import vis
from .path import ScanPath
from .replan import (
    VISIBILITY_AWARE,
    PlannerParams,
    Replanner,
    time_parameterize,
    warm_up,
)
from .scenario import Scenario, build_world, reveal_world
from .world import OBSTACLE

log = logging.getLogger(__name__)

WATCHDOG_FACTOR = 10.0


def vae(cr: float, or_: float, ft: float) -> float:
    """Coverage per second discounted by the occluded share, in table units.

    CR and OR are percentages and FT is in seconds; e.g. CR 97.84, OR 1.86,
    FT 79.80 gives 120.33.
    """
    if ft <= 0:
        raise ValueError("flight time must be positive")
    return cr * (100.0 - or_) / ft


def chamfer(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance of an empty set")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(da.mean() + db.mean())


@dataclass
class Frame:
    t: float
    config: object
    occluded: bool
    new_ids: list


@dataclass
class RunReport:
    mode: str
    status: str
    FT: float
    CR: float
    OR: float
    VaE: float
    D_set: float
    J_dev: float
    n_frames: int
    n_elements: int
    replans: int
    events: list = field(default_factory=list)
    first_seen: dict = field(default_factory=dict)
    CL_mean: float = 0.0
    CL_max: float = 0.0
    latencies: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    final_path: ScanPath | None = None

    def to_dict(self) -> dict:
        """Deterministic fields only; wall-clock latencies live in ``timing``."""
        return {
            "mode": self.mode,
            "status": self.status,
            "FT": round(self.FT, 6),
            "CR": round(self.CR, 6),
            "OR": round(self.OR, 6),
            "VaE": round(self.VaE, 6),
            "D_set": round(self.D_set, 6),
            "J_dev": round(self.J_dev, 6),
            "n_frames": self.n_frames,
            "n_elements": self.n_elements,
            "replans": self.replans,
            "or_scope": "whole flight",
            "events": self.events,
            "first_seen": {str(k): round(v, 6) for k, v in sorted(self.first_seen.items())},
        }

    def timing(self) -> dict:
        return {"CL_mean": self.CL_mean, "CL_max": self.CL_max, "calls": self.latencies}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _truth_grid(world):
    g = world.grid.copy()
    for h in world.hidden:
        g.set_labels(h.indices, OBSTACLE)
    return g


def run(
    scenario: Scenario,
    params: PlannerParams | None = None,
    mode: str = VISIBILITY_AWARE,
    trace=None,
    keep_frames: bool = False,
) -> RunReport:
    """Fly the nominal path, replanning as obstacles appear.

    ``trace`` may be a callable receiving one dict per frame and per event.
    """
    if params is None:
        params = PlannerParams.from_scenario(scenario, mode)
    elif params.mode != mode:
        params = PlannerParams(**{**params.__dict__, "mode": mode})
    world = build_world(scenario)
    truth = _truth_grid(world)
    warm_up()
    planner = Replanner(world.surface, world.frustum, params)
    v_max, w_max = scenario.v_max, scenario.omega_max
    emit = trace or (lambda rec: None)

    S = world.intended_ids
    seen = np.zeros(len(world.surface), bool)
    first_seen = {}
    nominal_vp = world.path.positions()[world.path.viewpoint_indices()]
    nominal_ft = time_parameterize(world.path, v_max, w_max).total
    watchdog = WATCHDOG_FACTOR * max(nominal_ft, 1.0)
    dt = 1.0 / params.frame_rate

    path = ScanPath(world.path)
    traj = time_parameterize(path, v_max, w_max)
    path = ScanPath(traj.nodes)
    t_global = 0.0  # simulated time since takeoff
    t_local = 0.0  # time along the current trajectory
    last_check = 0.0
    frames_occ = 0
    n_frames = 0
    events = []
    latencies = []
    frames = []
    status = "ok"
    captured = {}  # id -> node, for viewpoints already photographed

    def capture(cfg, t):
        ids = S[~seen[S]]
        if len(ids) == 0:
            return []
        new = vis.visible_elements(cfg, ids, truth, world.surface, world.frustum)
        seen[new] = True
        for e in new:
            first_seen[int(e)] = t
        return [int(e) for e in new]

    while True:
        k, rho = traj.locate(t_local)
        q = traj.config_at(t_local)
        arrived = rho >= 1.0 - 1e-12
        exec_idx = min(k + 1, len(path) - 1)

        n_new = reveal_world(world, q.p)
        due = t_global - last_check >= params.refresh_s - 1e-9
        if (n_new > 0 or due) and not (arrived and exec_idx == len(path) - 1):
            last_check = t_global
            reason = planner.should_replan(path, exec_idx, world.grid, entry=q)
            if reason is not None:
                new_path, win, rep = planner.replan(path, exec_idx, world.grid, entry=q, trigger=reason)
                latencies.append(rep.total_ms)
                if rep.status != "identity":
                    # the new path restarts at the current configuration
                    prefix = len(path[: win.i_s])
                    path = ScanPath(new_path[prefix:])
                    traj = time_parameterize(path, v_max, w_max)
                    path = ScanPath(traj.nodes)
                    t_local = 0.0
                    rec = {"type": "replan", "t": round(t_global, 6), **rep.as_dict(timing=False)}
                    events.append(rec)
                    emit(rec)
                    k, rho = traj.locate(t_local)
                    q = traj.config_at(t_local)
                    if rep.status == "degraded":
                        status = "degraded"

        # viewpoint captures count toward coverage, not toward the frame rate
        for idx in range(0, min(k + 2 if arrived else k + 1, len(path))):
            node = path[idx]
            if node.is_viewpoint and id(node) not in captured:
                captured[id(node)] = node
                capture(node.config, t_global)

        occluded = vis.occ(q, truth, world.frustum)
        new = capture(q, t_global)
        n_frames += 1
        frames_occ += int(occluded)
        rec = {
            "type": "frame",
            "t": round(t_global, 6),
            "p": [round(v, 6) for v in q.p],
            "theta": round(q.theta, 9),
            "psi": round(q.psi, 9),
            "occluded": bool(occluded),
            "new": new,
        }
        emit(rec)
        if keep_frames:
            frames.append(Frame(t_global, q, bool(occluded), new))

        if t_local >= traj.total - 1e-12:
            break
        if t_global >= watchdog:
            status = "timeout"
            break
        step = min(dt, traj.total - t_local)
        t_local += step
        t_global += step

    ft = t_global
    cr = 100.0 * np.count_nonzero(seen[S]) / max(len(S), 1)
    or_ = 100.0 * frames_occ / max(n_frames, 1)
    done = list(captured.values())
    exec_pos = np.array([n.config.p for n in done]).reshape(-1, 3)
    nominal_by_id = {n.nominal_id: n.config.position for n in world.path if n.is_viewpoint}
    j_dev = sum(
        float(np.linalg.norm(n.config.position - nominal_by_id[n.nominal_id]))
        for n in done
        if n.origin == "replacement" and n.nominal_id in nominal_by_id
    )
    report = RunReport(
        mode=mode,
        status=status,
        FT=ft,
        CR=cr,
        OR=or_,
        VaE=vae(cr, or_, ft) if ft > 0 else 0.0,
        D_set=chamfer(exec_pos, nominal_vp) if len(exec_pos) else 0.0,
        J_dev=j_dev,
        n_frames=n_frames,
        n_elements=int(len(S)),
        replans=len(events),
        events=events,
        first_seen=first_seen,
        CL_mean=float(np.mean(latencies)) if latencies else 0.0,
        CL_max=float(np.max(latencies)) if latencies else 0.0,
        latencies=latencies,
        frames=frames,
        final_path=path,
    )
    return report
