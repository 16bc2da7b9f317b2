"""Voxel occupancy world: labels, raycasting, clearance and frustum queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .geom import CameraConfig, FrustumParams, HalfSpaceSet

UNKNOWN, FREE, TARGET, OBSTACLE = 0, 1, 2, 3
LABEL_NAMES = {TARGET: "target", OBSTACLE: "obstacle"}

LOCAL_CAP = 64
LOCAL_RADIUS_CAP = 3.0


class LabelConflict(ValueError):
    pass


@dataclass
class RayHit:
    blocked: bool
    hit_point: tuple | None = None
    hit_label: str | None = None


class VoxelGrid:
    """Dense label array over an axis-aligned box.

    Unknown and free cells are both treated as empty by every query.
    ``version`` increments on every label change so that derived caches can
    detect stale snapshots.
    """

    def __init__(self, resolution: float, bounds_min, bounds_max):
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.origin = np.asarray(bounds_min, float).copy()
        self.bounds_max = np.asarray(bounds_max, float).copy()
        extent = self.bounds_max - self.origin
        if np.any(extent <= 0):
            raise ValueError("bounds.max must exceed bounds.min on every axis")
        shape = np.maximum(np.round(extent / self.resolution).astype(int), 1)
        self.codes = np.zeros(tuple(shape), np.int8)
        self.version = 0
        self._derived_version = -1
        self._derived: dict = {}

    @property
    def shape(self):
        return self.codes.shape

    def copy(self) -> "VoxelGrid":
        g = VoxelGrid.__new__(VoxelGrid)
        g.resolution = self.resolution
        g.origin = self.origin.copy()
        g.bounds_max = self.bounds_max.copy()
        g.codes = self.codes.copy()
        g.version = self.version
        g._derived_version = -1
        g._derived = {}
        return g

    # -- indexing -----------------------------------------------------------

    def index_of(self, x):
        idx = np.floor((np.asarray(x, float) - self.origin) / self.resolution).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            return None
        return tuple(int(i) for i in idx)

    def indices_of(self, pts) -> np.ndarray:
        return np.floor((np.asarray(pts, float) - self.origin) / self.resolution).astype(int)

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, float) + 0.5) * self.resolution

    def in_bounds(self, x) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.origin) and np.all(x <= self.bounds_max))

    def in_bounds_many(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.all(pts >= self.origin, axis=1) & np.all(pts <= self.bounds_max, axis=1)

    def label_at(self, idx) -> int:
        return int(self.codes[tuple(idx)])

    # -- mutation -----------------------------------------------------------

    def set_labels(self, indices, label: int) -> int:
        """Label the given voxels; returns how many changed."""
        indices = np.asarray(indices, int).reshape(-1, 3)
        if indices.size == 0:
            return 0
        cur = self.codes[indices[:, 0], indices[:, 1], indices[:, 2]]
        other = OBSTACLE if label == TARGET else TARGET if label == OBSTACLE else None
        if other is not None and np.any(cur == other):
            raise LabelConflict("reveal may not flip target and obstacle labels")
        changed = cur != label
        n = int(np.count_nonzero(changed))
        if n:
            sel = indices[changed]
            self.codes[sel[:, 0], sel[:, 1], sel[:, 2]] = label
            self.version += 1
        return n

    # -- derived point sets ---------------------------------------------------

    def _refresh(self):
        if self._derived_version == self.version:
            return
        d = {}
        for name, labels in (("obstacle", (OBSTACLE,)), ("target", (TARGET,)), ("any", (TARGET, OBSTACLE))):
            mask = np.isin(self.codes, labels)
            idx = np.ascontiguousarray(np.argwhere(mask))
            d[name + "_idx"] = idx
            d[name] = np.ascontiguousarray(self.origin + (idx + 0.5) * self.resolution)
            d[name + "_tree"] = None
        self._derived = d
        self._derived_version = self.version

    def centers(self, label: str = "any") -> np.ndarray:
        self._refresh()
        return self._derived[label]

    def voxel_indices(self, label: str = "any") -> np.ndarray:
        self._refresh()
        return self._derived[label + "_idx"]

    def tree(self, label: str = "any"):
        self._refresh()
        key = label + "_tree"
        if self._derived[key] is None and len(self._derived[label]):
            self._derived[key] = cKDTree(self._derived[label])
        return self._derived[key]


# -- queries -------------------------------------------------------------------

_BLOCKERS = {"any": (True, True), "target": (True, False), "obstacle": (False, True)}


def raycast(grid: VoxelGrid, start, end, skip_end: bool = False, blockers: str = "any") -> RayHit:
    """First occupied voxel met walking from ``start`` to ``end``.

    ``skip_end`` ignores the voxel containing ``end`` (used when the ray
    terminates on a surface element so the element does not hide itself).
    """
    a = np.asarray(start, float)
    b = np.asarray(end, float)
    bt, bo = _BLOCKERS[blockers]
    hit, i, j, k, t = _kernels.traverse(grid.codes, grid.origin, grid.resolution, a, b, bt, bo, skip_end)
    if not hit:
        return RayHit(False)
    point = a + t * (b - a)
    return RayHit(True, tuple(float(v) for v in point), LABEL_NAMES[int(grid.codes[i, j, k])])


def unblocked(grid: VoxelGrid, start, ends, skip_end: bool = True, blockers: str = "any") -> np.ndarray:
    ends = np.ascontiguousarray(np.asarray(ends, float).reshape(-1, 3))
    if len(ends) == 0:
        return np.zeros(0, bool)
    bt, bo = _BLOCKERS[blockers]
    return _kernels.unblocked_mask(
        grid.codes, grid.origin, grid.resolution, np.asarray(start, float), ends, bt, bo, skip_end
    )


def half_diagonal(grid: VoxelGrid) -> float:
    return 0.5 * math.sqrt(3.0) * grid.resolution


def min_clearance(grid: VoxelGrid, x) -> float:
    """Distance to the nearest occupied voxel, minus half a voxel diagonal."""
    return float(clearance_many(grid, np.asarray(x, float).reshape(1, 3))[0])


def clearance_many(grid: VoxelGrid, pts) -> np.ndarray:
    pts = np.asarray(pts, float).reshape(-1, 3)
    tree = grid.tree("any")
    if tree is None:
        return np.full(len(pts), math.inf)
    dist, _ = tree.query(pts)
    return np.maximum(dist - half_diagonal(grid), 0.0)


def voxels_in_frustum(grid: VoxelGrid, hs: HalfSpaceSet, label: str = "obstacle") -> np.ndarray:
    pts = grid.centers(label)
    if len(pts) == 0:
        return pts.reshape(0, 3)
    return pts[hs.contains(pts)]


def obstacle_in_frustum(grid: VoxelGrid, hs: HalfSpaceSet) -> bool:
    pts = grid.centers("obstacle")
    if len(pts) == 0:
        return False
    return bool(_kernels.any_inside(hs.normals, hs.offsets, hs.apex, hs.direction, pts))


def default_local_radius(params: FrustumParams) -> float:
    return min(2.0 * params.r_max * math.tan(0.5 * params.alpha_h), LOCAL_RADIUS_CAP)


def local_voxels(grid: VoxelGrid, q: CameraConfig, radius: float, cap: int = LOCAL_CAP) -> np.ndarray:
    """Obstacle voxel centers within ``radius`` of the camera, nearest first."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts = grid.centers("obstacle")
    if len(pts) == 0:
        return pts.reshape(0, 3)
    tree = grid.tree("obstacle")
    k = min(cap, len(pts))
    dist, idx = tree.query(q.position, k=k, distance_upper_bound=radius)
    dist = np.atleast_1d(dist)
    idx = np.atleast_1d(idx)
    keep = np.isfinite(dist) & (dist <= radius)
    dist, idx = dist[keep], idx[keep]
    order = np.lexsort((idx, dist))
    return pts[idx[order]]


# -- hidden obstacles and reveal ------------------------------------------------


@dataclass
class HiddenObstacle:
    id: str
    indices: np.ndarray  # (N, 3) voxel indices
    trigger: str  # "always" | "distance"
    reveal_range: float
    revealed: np.ndarray = field(default=None)
    linked_to: str | None = None  # id of the set whose reveal also reveals this one

    def __post_init__(self):
        self.indices = np.asarray(self.indices, int).reshape(-1, 3)
        if self.revealed is None:
            self.revealed = np.zeros(len(self.indices), bool)


def reveal(grid: VoxelGrid, sensor, hidden: list[HiddenObstacle]) -> int:
    """Simulated LiDAR sweep from ``sensor``; returns the newly labelled count.

    Line of sight is evaluated on the map as it stood before this call, with
    each obstacle's own voxels removed so a solid object is seen whole.
    """
    sensor = np.asarray(sensor, float)
    snapshot = grid.codes
    pending = []
    for ob in hidden:
        todo = ~ob.revealed
        if not np.any(todo):
            continue
        if ob.trigger == "always":
            pending.append((ob, todo.copy()))
            continue
        centers = grid.origin + (ob.indices + 0.5) * grid.resolution
        near = todo & (np.linalg.norm(centers - sensor, axis=1) <= ob.reveal_range)
        if not np.any(near):
            continue
        codes = snapshot.copy()
        own = ob.indices
        own_codes = codes[own[:, 0], own[:, 1], own[:, 2]]
        codes[own[:, 0], own[:, 1], own[:, 2]] = np.where(own_codes == OBSTACLE, FREE, own_codes)
        sel = np.flatnonzero(near)
        ends = np.ascontiguousarray(centers[sel])
        clear = _kernels.unblocked_mask(codes, grid.origin, grid.resolution, sensor, ends, True, True, True)
        mask = np.zeros(len(ob.indices), bool)
        mask[sel[clear]] = True
        if np.any(mask):
            pending.append((ob, mask))
    count = 0
    for ob, mask in pending:
        count += grid.set_labels(ob.indices[mask], OBSTACLE)
        ob.revealed |= mask
    return count


# -- target surface ----------------------------------------------------------------

_FACE_DIRS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], int
)


@dataclass(eq=False)
class SurfaceModel:
    """Target voxels with at least one exposed face, one element per voxel."""

    points: np.ndarray  # (N, 3) element centers
    normals: np.ndarray  # (N, 3)
    voxels: np.ndarray  # (N, 3) voxel indices
    element_size: float

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_grid(cls, grid: VoxelGrid) -> "SurfaceModel":
        idx = grid.voxel_indices("target")
        shape = np.array(grid.shape)
        is_target = grid.codes == TARGET
        exposed = np.zeros((len(idx), 6), bool)
        for f, off in enumerate(_FACE_DIRS):
            nb = idx + off
            inside = np.all((nb >= 0) & (nb < shape), axis=1)
            open_face = np.zeros(len(idx), bool)
            nbi = nb[inside]
            open_face[inside] = ~is_target[nbi[:, 0], nbi[:, 1], nbi[:, 2]]
            exposed[:, f] = open_face
        keep = exposed.any(axis=1)
        idx = idx[keep]
        exposed = exposed[keep]
        normals = exposed.astype(float) @ _FACE_DIRS.astype(float)
        norm = np.linalg.norm(normals, axis=1)
        # slabs exposed on opposite faces: fall back to the first open face
        flat = norm < 1e-9
        if np.any(flat):
            first = np.argmax(exposed[flat], axis=1)
            normals[flat] = _FACE_DIRS[first]
            norm[flat] = 1.0
        normals = normals / norm[:, None]
        points = grid.origin + (idx + 0.5) * grid.resolution
        return cls(points, normals, idx, grid.resolution)
