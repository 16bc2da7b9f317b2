"""Visibility predicates and coverage accounting.

Two cleanliness notions coexist here:

* ``occ`` -- any obstacle voxel center inside the frustum. This is the clean
  FoV condition consumed by the segment search and the candidate filter.
* viewpoint qualification -- clearance, ``not occ`` and every intended
  element ray-visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geom import CameraConfig, FrustumParams, make_frustum
from .world import SurfaceModel, VoxelGrid, min_clearance, obstacle_in_frustum, unblocked


@dataclass(eq=False)
class CoverageSet:
    mask: np.ndarray  # bool over element ids

    @classmethod
    def empty(cls, n: int) -> "CoverageSet":
        return cls(np.zeros(n, bool))

    @classmethod
    def from_ids(cls, n: int, ids) -> "CoverageSet":
        m = np.zeros(n, bool)
        m[np.asarray(ids, int)] = True
        return cls(m)

    @property
    def ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def ratio(self) -> float:
        return self.count / len(self.mask) if len(self.mask) else 0.0

    def union(self, other: "CoverageSet") -> "CoverageSet":
        return CoverageSet(self.mask | other.mask)

    def __eq__(self, other):
        return isinstance(other, CoverageSet) and np.array_equal(self.mask, other.mask)


def occ(q: CameraConfig, grid: VoxelGrid, params: FrustumParams) -> bool:
    """True when some obstacle voxel center lies inside the frustum of ``q``."""
    return occ_among(q, grid.centers("obstacle"), params)


def occ_among(q: CameraConfig, pts, params: FrustumParams) -> bool:
    """``occ`` restricted to the given obstacle samples."""
    if len(pts) == 0:
        return False
    a, b = 0.5 * params.alpha_h, 0.5 * params.alpha_v
    return bool(
        _kernels.occ_config(
            np.asarray(q.p, float), q.theta, q.psi,
            math.sin(a), math.cos(a), math.sin(b), math.cos(b), params.r_max, pts,
        )
    )


def occ_by_planes(q: CameraConfig, grid: VoxelGrid, params: FrustumParams) -> bool:
    """Reference evaluation of ``occ`` through the explicit half-space set."""
    return obstacle_in_frustum(grid, make_frustum(q, params))


def visible_elements(q, ids, grid, surface, params, blockers="any") -> np.ndarray:
    """Subset of ``ids`` inside the frustum with an unblocked ray."""
    ids = np.asarray(ids, int)
    if len(ids) == 0:
        return ids
    hs = make_frustum(q, params)
    ids = ids[hs.contains(surface.points[ids])]
    if len(ids) == 0:
        return ids
    clear = unblocked(grid, q.p, surface.points[ids], skip_end=True, blockers=blockers)
    return ids[clear]


def element_visible(q, e: int, grid, surface, params) -> bool:
    return len(visible_elements(q, [e], grid, surface, params)) == 1


def visible_subset(q, ids, grid, surface) -> np.ndarray:
    """Drop elements hidden behind other target geometry (no frustum test)."""
    ids = np.asarray(ids, int)
    if len(ids) == 0:
        return ids
    clear = unblocked(grid, q.p, surface.points[ids], skip_end=True, blockers="target")
    return ids[clear]


def is_qualified(node, grid, surface, params, d_min) -> bool:
    if node.intended is None:
        raise ValueError("viewpoint has no intended subset")
    q = node.config
    if min_clearance(grid, q.p) < d_min:
        return False
    if occ(q, grid, params):
        return False
    vis = visible_elements(q, node.intended, grid, surface, params)
    return len(vis) == len(node.intended)


def classify_viewpoints(path, grid, surface, params, d_min, indices=None):
    """Split viewpoint indices into (qualified, invalid)."""
    if indices is None:
        indices = [i for i, n in enumerate(path) if n.is_viewpoint]
    qual, inv = [], []
    for i in indices:
        node = path[i]
        if node.intended is None:
            raise ValueError(f"viewpoint {i} is missing its intended subset")
        (qual if is_qualified(node, grid, surface, params, d_min) else inv).append(i)
    return qual, inv


def coverage(views, surface: SurfaceModel, params: FrustumParams, ids=None) -> CoverageSet:
    """Union of visible elements over (config, grid) pairs."""
    n = len(surface)
    cov = CoverageSet.empty(n)
    if ids is None:
        ids = np.arange(n)
    for q, grid in views:
        cov.mask[visible_elements(q, ids, grid, surface, params)] = True
    return cov
