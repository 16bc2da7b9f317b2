"""Scan path representation shared by the planner and the simulator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import CameraConfig

VIEWPOINT = "viewpoint"
WAYPOINT = "waypoint"


@dataclass(frozen=True, eq=False)
class PathNode:
    config: CameraConfig
    kind: str = WAYPOINT
    intended: np.ndarray | None = None  # element ids, viewpoints only
    origin: str = "nominal"  # nominal | replacement | completion | connector | current
    nominal_id: int | None = None  # nominal index of the viewpoint this node stands for

    def __post_init__(self):
        if self.kind not in (VIEWPOINT, WAYPOINT):
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.intended is not None:
            object.__setattr__(self, "intended", np.asarray(self.intended, int))

    @property
    def is_viewpoint(self) -> bool:
        return self.kind == VIEWPOINT

    def same_as(self, other: "PathNode") -> bool:
        if self.config != other.config or self.kind != other.kind:
            return False
        if (self.intended is None) != (other.intended is None):
            return False
        return self.intended is None or np.array_equal(self.intended, other.intended)


class ScanPath(list):
    """Ordered list of PathNode."""

    def positions(self) -> np.ndarray:
        return np.array([n.config.p for n in self], float).reshape(-1, 3)

    def viewpoint_indices(self) -> list[int]:
        return [i for i, n in enumerate(self) if n.is_viewpoint]

    def arc_lengths(self) -> np.ndarray:
        pos = self.positions()
        if len(pos) < 2:
            return np.zeros(len(pos))
        seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])
