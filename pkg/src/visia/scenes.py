"""Small desk-scale scenes used by the benchmarks, the CLI and the tests.

Each builder returns a plain scenario document (a dict matching the JSON
schema), so scenes can be written to disk and edited by hand.
"""

from __future__ import annotations

import math

import numpy as np

from .geom import CameraConfig
from .scenario import build_world, scenario_from_dict

DESK_RESOLUTION = 0.25
DESK_PLANNER = {"delta_p": 0.25, "d_min": 0.2}

_CAMERA = {"alpha_h_deg": 80.0, "alpha_v_deg": 65.0, "r_max": 7.0}
_LIMITS = {"v_max": 1.0, "omega_max_deg": 20.0}


def _box(lo, hi):
    return {"min": [float(v) for v in lo], "max": [float(v) for v in hi]}


def _vp(p, theta_deg=0.0, psi_deg=90.0, kind="viewpoint"):
    return {"p": [float(v) for v in p], "theta_deg": theta_deg, "psi_deg": psi_deg, "kind": kind}


def wall_scan(n_views: int = 5, spacing: float = 4.0, standoff: float = 4.0, posts: bool = True,
              post_height: float = 0.75, seed: int = 0, layout: str = "between") -> dict:
    """A wall target scanned from a parallel line, with posts in front of it.

    Posts stand halfway between the flight line and the wall. With
    ``layout="between"`` they sit midway between consecutive viewpoints, so
    a camera facing the wall has one of them in its frustum most of the
    time. With ``layout="facing"`` each one stands squarely in front of a
    viewpoint, which makes those viewpoints unusable as planned.
    """
    if layout not in ("between", "facing"):
        raise ValueError(f"unknown post layout {layout!r}")
    length = spacing * n_views
    x0 = 0.5 * spacing
    doc = {
        "resolution": DESK_RESOLUTION,
        "bounds": {"min": [-2.0, -8.0, 0.0], "max": [length + 2.0, 2.0, 4.0]},
        "target": {"boxes": [_box((0.0, 0.0, 0.0), (length, 0.25, 2.5))]},
        "obstacles": [],
        "nominal_path": [
            _vp((x0 + i * spacing, -standoff, 1.5)) for i in range(n_views)
        ],
        "camera": dict(_CAMERA),
        "limits": dict(_LIMITS),
        "lidar_range": 15.0,
        "seed": seed,
        "planner": dict(DESK_PLANNER),
    }
    if posts:
        y = -0.5 * standoff
        xs = [x0 + (i + 0.5) * spacing for i in range(n_views - 1)]
        if layout == "facing":
            xs = [x0 + i * spacing for i in range(1, n_views - 1)]
        for i, x in enumerate(xs):
            doc["obstacles"].append(
                {
                    "id": f"post-{i}",
                    "boxes": [_box((x - 0.25, y - 0.25, 0.0), (x + 0.25, y + 0.25, post_height))],
                    "trigger": {"type": "distance", "param": 8.0},
                }
            )
    return doc


def corridor(seed: int = 0) -> dict:
    """20 m corridor whose +y wall is the target, crates and ducts along it."""
    doc = {
        "resolution": DESK_RESOLUTION,
        "bounds": {"min": [0.0, -2.5, 0.0], "max": [20.0, 2.5, 3.0]},
        "target": {"boxes": [_box((0.0, 2.0, 0.0), (20.0, 2.25, 3.0))]},
        "obstacles": [],
        "nominal_path": [_vp((1.0, -1.0, 1.5)), _vp((19.0, -1.0, 1.5))],
        "camera": dict(_CAMERA),
        "limits": dict(_LIMITS),
        "seed": seed,
        "planner": dict(DESK_PLANNER),
    }
    for i, x in enumerate(np.arange(3.0, 18.0, 3.0)):
        doc["obstacles"].append(
            {
                "id": f"crate-{i}",
                "boxes": [_box((x - 0.5, 0.75, 0.0), (x + 0.5, 1.5, 0.75))],
                "trigger": {"type": "always"},
            }
        )
    for i, x in enumerate((7.5, 13.5)):
        doc["obstacles"].append(
            {
                "id": f"duct-{i}",
                "boxes": [_box((x - 1.0, 0.5, 2.25), (x + 1.0, 1.25, 3.0))],
                "trigger": {"type": "always"},
            }
        )
    return doc


def pillar_field(seed: int = 0, n_pillars: int = 8) -> dict:
    """15 x 15 x 4 m field of seeded pillars around a central target block."""
    rng = np.random.default_rng(1000 + seed)
    doc = {
        "resolution": DESK_RESOLUTION,
        "bounds": {"min": [0.0, 0.0, 0.0], "max": [15.0, 15.0, 4.0]},
        "target": {"boxes": [_box((6.5, 6.5, 0.0), (8.5, 8.5, 2.0))]},
        "obstacles": [],
        "nominal_path": [_vp((2.0, 7.5, 1.5), 0.0, 0.0)],
        "camera": dict(_CAMERA),
        "limits": dict(_LIMITS),
        "seed": seed,
        "planner": dict(DESK_PLANNER),
    }
    placed = 0
    while placed < n_pillars:
        c = rng.uniform(1.0, 14.0, size=2)
        if np.all(np.abs(c - 7.5) < 2.0):
            continue
        w = rng.uniform(0.25, 0.6)
        h = rng.choice([1.0, 4.0])
        doc["obstacles"].append(
            {
                "id": f"pillar-{placed}",
                "boxes": [_box((c[0] - w, c[1] - w, 0.0), (c[0] + w, c[1] + w, h))],
                "trigger": {"type": "always"},
            }
        )
        placed += 1
    return doc


def revealed_world(doc: dict):
    """World with every obstacle already mapped (for connector benchmarks)."""
    world = build_world(scenario_from_dict(doc))
    for h in world.hidden:
        world.grid.set_labels(h.indices, 3)
        h.revealed[:] = True
    return world


def endpoint_pairs(world, kind: str, n: int, seed: int = 0, d_min: float = 0.2, check=None):
    """Seeded (start, goal) configuration pairs for connector benchmarks.

    ``check`` filters configurations (e.g. requiring a clean frustum).
    """
    from .world import min_clearance

    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < n and tries < 200 * n:
        tries += 1
        if kind == "corridor":
            a = (rng.uniform(0.5, 2.0), rng.uniform(-1.5, -0.5), rng.uniform(1.25, 1.75))
            b = (rng.uniform(18.0, 19.5), rng.uniform(-1.5, -0.5), rng.uniform(1.25, 1.75))
            ya, yb = math.radians(rng.uniform(80, 100)), math.radians(rng.uniform(80, 100))
        else:
            a = (*rng.uniform(0.5, 14.5, size=2), rng.uniform(1.25, 1.75))
            b = (*rng.uniform(0.5, 14.5, size=2), rng.uniform(1.25, 1.75))
            if not 8.0 <= math.dist(a, b) <= 12.0:
                continue
            ya, yb = rng.uniform(-math.pi, math.pi, size=2)
        qa = CameraConfig(a, 0.0, ya)
        qb = CameraConfig(b, 0.0, yb)
        if min(min_clearance(world.grid, a), min_clearance(world.grid, b)) < d_min:
            continue
        if check is not None and not (check(qa) and check(qb)):
            continue
        out.append((qa, qb))
    return out
