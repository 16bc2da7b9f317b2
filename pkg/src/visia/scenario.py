"""Scenario documents: JSON schema, validation, round-tripping and world building.

Angles are stored in degrees exactly as written in the file; conversion to
radians happens when the world is built.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import vis
from .geom import PITCH_MAX, PITCH_MIN, CameraConfig, FrustumParams
from .path import VIEWPOINT, WAYPOINT, PathNode, ScanPath
from .world import OBSTACLE, TARGET, HiddenObstacle, SurfaceModel, VoxelGrid

DEFAULT_LIDAR_RANGE = 15.0
DEFAULT_RESOLUTION = 0.1


class ScenarioError(ValueError):
    """Validation failure; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioParseError(ScenarioError):
    pass


_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_box = {
    "type": "object",
    "properties": {"min": _vec3, "max": _vec3},
    "required": ["min", "max"],
    "additionalProperties": False,
}
_geometry = {
    "boxes": {"type": "array", "items": _box},
    "voxel_list": {"type": "array", "items": _vec3},
}
_trigger = {
    "type": "object",
    "properties": {
        "type": {"enum": ["always", "distance", "with"]},
        "param": {"type": ["number", "string", "null"]},
    },
    "required": ["type"],
    "additionalProperties": False,
}
_pos = {"type": "number", "exclusiveMinimum": 0}

PLANNER_KEYS = {
    "d_min": _pos,
    "lambda_d": {"type": "number", "minimum": 0},
    "horizon": {"type": "number", "minimum": 0},
    "budget_ms": {"type": "number", "minimum": 0},
    "template_step_deg": _pos,
    "delta_p": _pos,
    "lambda_heu": {"type": "number", "minimum": 1},
    "n_bis": {"type": "integer", "minimum": 1},
    "cache_deg": _pos,
    "refresh_s": _pos,
    "frame_rate": _pos,
    "enforce_budget": {"type": "boolean"},
}

SCHEMA = {
    "type": "object",
    "properties": {
        "resolution": _pos,
        "bounds": {
            "type": "object",
            "properties": {"min": _vec3, "max": _vec3},
            "required": ["min", "max"],
            "additionalProperties": False,
        },
        "target": {"type": "object", "properties": _geometry, "additionalProperties": False},
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": {"type": "string"}, **_geometry, "trigger": _trigger},
                "required": ["id", "trigger"],
                "additionalProperties": False,
            },
        },
        "nominal_path": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "p": _vec3,
                    "theta_deg": {"type": "number"},
                    "psi_deg": {"type": "number"},
                    "kind": {"enum": [VIEWPOINT, WAYPOINT]},
                },
                "required": ["p", "theta_deg", "psi_deg", "kind"],
                "additionalProperties": False,
            },
        },
        "camera": {
            "type": "object",
            "properties": {
                "alpha_h_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
                "alpha_v_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
                "r_max": _pos,
            },
            "required": ["alpha_h_deg", "alpha_v_deg", "r_max"],
            "additionalProperties": False,
        },
        "limits": {
            "type": "object",
            "properties": {"v_max": _pos, "omega_max_deg": _pos},
            "required": ["v_max", "omega_max_deg"],
            "additionalProperties": False,
        },
        "lidar_range": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "planner": {"type": "object", "properties": PLANNER_KEYS, "additionalProperties": False},
        "random_obstacles": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "size_min": _vec3,
                "size_max": _vec3,
                "region": _box,
                "trigger": _trigger,
            },
            "required": ["count", "size_min", "size_max", "region", "trigger"],
            "additionalProperties": False,
        },
    },
    "required": ["resolution", "bounds", "target", "nominal_path", "camera", "limits"],
    "additionalProperties": False,
}


def _tup(v):
    return tuple(float(x) for x in v)


def _boxes(raw):
    return tuple((_tup(b["min"]), _tup(b["max"])) for b in raw or ())


@dataclass(frozen=True)
class Trigger:
    type: str
    param: float | str | None = None


@dataclass(frozen=True)
class ObstacleSpec:
    id: str
    boxes: tuple = ()
    voxel_list: tuple = ()
    trigger: Trigger = Trigger("distance")


@dataclass(frozen=True)
class NodeSpec:
    p: tuple
    theta_deg: float
    psi_deg: float
    kind: str


@dataclass(frozen=True)
class RandomObstacles:
    count: int
    size_min: tuple
    size_max: tuple
    region: tuple
    trigger: Trigger


@dataclass(frozen=True)
class Scenario:
    resolution: float
    bounds: tuple
    target_boxes: tuple
    target_voxels: tuple
    obstacles: tuple
    nominal_path: tuple
    alpha_h_deg: float
    alpha_v_deg: float
    r_max: float
    v_max: float
    omega_max_deg: float
    lidar_range: float = DEFAULT_LIDAR_RANGE
    seed: int = 0
    planner: dict = field(default_factory=dict)
    random_obstacles: RandomObstacles | None = None

    @property
    def frustum(self) -> FrustumParams:
        return FrustumParams.from_degrees(self.alpha_h_deg, self.alpha_v_deg, self.r_max)

    @property
    def omega_max(self) -> float:
        return math.radians(self.omega_max_deg)

    def to_dict(self) -> dict:
        def trig(t):
            d = {"type": t.type}
            if t.param is not None:
                d["param"] = t.param
            return d

        def geom(boxes, voxels):
            d = {}
            if boxes:
                d["boxes"] = [{"min": list(a), "max": list(b)} for a, b in boxes]
            if voxels:
                d["voxel_list"] = [list(v) for v in voxels]
            return d

        doc = {
            "resolution": self.resolution,
            "bounds": {"min": list(self.bounds[0]), "max": list(self.bounds[1])},
            "target": geom(self.target_boxes, self.target_voxels),
            "obstacles": [
                {"id": o.id, **geom(o.boxes, o.voxel_list), "trigger": trig(o.trigger)}
                for o in self.obstacles
            ],
            "nominal_path": [
                {"p": list(n.p), "theta_deg": n.theta_deg, "psi_deg": n.psi_deg, "kind": n.kind}
                for n in self.nominal_path
            ],
            "camera": {
                "alpha_h_deg": self.alpha_h_deg,
                "alpha_v_deg": self.alpha_v_deg,
                "r_max": self.r_max,
            },
            "limits": {"v_max": self.v_max, "omega_max_deg": self.omega_max_deg},
            "lidar_range": self.lidar_range,
            "seed": self.seed,
        }
        if self.planner:
            doc["planner"] = dict(self.planner)
        if self.random_obstacles is not None:
            r = self.random_obstacles
            doc["random_obstacles"] = {
                "count": r.count,
                "size_min": list(r.size_min),
                "size_max": list(r.size_max),
                "region": {"min": list(r.region[0]), "max": list(r.region[1])},
                "trigger": trig(r.trigger),
            }
        return doc


def _schema_field(err) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            out = f"{out}.{extra[0]}" if out else extra[0]
    return out or "<root>"


def _trigger(raw) -> Trigger:
    return Trigger(raw["type"], raw.get("param"))


def scenario_from_dict(doc: dict) -> Scenario:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(_schema_field(err), err.message)
    obstacles = tuple(
        ObstacleSpec(
            o["id"],
            _boxes(o.get("boxes")),
            tuple(_tup(v) for v in o.get("voxel_list", ())),
            _trigger(o["trigger"]),
        )
        for o in doc.get("obstacles", [])
    )
    rnd = doc.get("random_obstacles")
    sc = Scenario(
        resolution=float(doc["resolution"]),
        bounds=(_tup(doc["bounds"]["min"]), _tup(doc["bounds"]["max"])),
        target_boxes=_boxes(doc["target"].get("boxes")),
        target_voxels=tuple(_tup(v) for v in doc["target"].get("voxel_list", ())),
        obstacles=obstacles,
        nominal_path=tuple(
            NodeSpec(_tup(n["p"]), float(n["theta_deg"]), float(n["psi_deg"]), n["kind"])
            for n in doc["nominal_path"]
        ),
        alpha_h_deg=float(doc["camera"]["alpha_h_deg"]),
        alpha_v_deg=float(doc["camera"]["alpha_v_deg"]),
        r_max=float(doc["camera"]["r_max"]),
        v_max=float(doc["limits"]["v_max"]),
        omega_max_deg=float(doc["limits"]["omega_max_deg"]),
        lidar_range=float(doc.get("lidar_range", DEFAULT_LIDAR_RANGE)),
        seed=int(doc.get("seed", 0)),
        planner=dict(doc.get("planner", {})),
        random_obstacles=None
        if rnd is None
        else RandomObstacles(
            int(rnd["count"]),
            _tup(rnd["size_min"]),
            _tup(rnd["size_max"]),
            (_tup(rnd["region"]["min"]), _tup(rnd["region"]["max"])),
            _trigger(rnd["trigger"]),
        ),
    )
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    lo, hi = np.array(sc.bounds[0]), np.array(sc.bounds[1])
    if np.any(hi <= lo):
        raise ScenarioError("bounds", "max must exceed min on every axis")
    ids = [o.id for o in sc.obstacles]
    seen = set()
    for i, oid in enumerate(ids):
        if oid in seen:
            raise ScenarioError(f"obstacles[{i}].id", f"duplicate obstacle id {oid!r}")
        seen.add(oid)
    for i, o in enumerate(sc.obstacles):
        t = o.trigger
        if t.type == "with" and t.param not in seen:
            raise ScenarioError(f"obstacles[{i}].trigger.param", f"unknown obstacle set {t.param!r}")
        if t.type == "with" and t.param == o.id:
            raise ScenarioError(f"obstacles[{i}].trigger.param", "obstacle may not trigger itself")
        if t.type == "distance" and t.param is not None and not isinstance(t.param, (int, float)):
            raise ScenarioError(f"obstacles[{i}].trigger.param", "distance trigger needs a number")
        if not o.boxes and not o.voxel_list:
            raise ScenarioError(f"obstacles[{i}]", "obstacle has no geometry")
    if not sc.target_boxes and not sc.target_voxels:
        raise ScenarioError("target", "target has no geometry")
    if not any(n.kind == VIEWPOINT for n in sc.nominal_path):
        raise ScenarioError("nominal_path", "path needs at least one viewpoint")
    for i, n in enumerate(sc.nominal_path):
        p = np.array(n.p)
        if np.any(p < lo) or np.any(p > hi):
            raise ScenarioError(f"nominal_path[{i}].p", "position outside bounds")
        th = math.radians(n.theta_deg)
        if not PITCH_MIN - 1e-9 <= th <= PITCH_MAX + 1e-9:
            raise ScenarioError(f"nominal_path[{i}].theta_deg", "pitch outside gimbal limits [-80, 30]")
        if i and sc.nominal_path[i - 1] == n:
            raise ScenarioError(f"nominal_path[{i}]", "duplicate consecutive node")


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings to a raw scenario document."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        node = doc
        sub = SCHEMA
        for depth, part in enumerate(parts):
            props = sub.get("properties", {})
            if part not in props:
                raise ScenarioError(key, "unknown key")
            sub = props[part]
            if depth == len(parts) - 1:
                node[part] = value
            else:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ScenarioError(key, "cannot descend into a non-object")
    return doc


def read_document(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(str(path), f"malformed JSON ({exc})") from exc


def load_scenario(path, overrides=()) -> Scenario:
    doc = read_document(path)
    if overrides:
        doc = apply_overrides(doc, overrides)
    sc = scenario_from_dict(doc)
    build_world(sc)  # surfaces path-level validation errors early
    return sc


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2) + "\n")


# -- world building ------------------------------------------------------------------


@dataclass(eq=False)
class World:
    scenario: Scenario
    grid: VoxelGrid
    surface: SurfaceModel
    hidden: list
    path: ScanPath
    frustum: FrustumParams
    intended: np.ndarray  # bool mask over surface elements

    @property
    def intended_ids(self) -> np.ndarray:
        return np.flatnonzero(self.intended)


def _box_indices(grid: VoxelGrid, lo, hi) -> np.ndarray:
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    i0 = np.ceil((lo - grid.origin) / grid.resolution - 0.5 - 1e-9).astype(int)
    i1 = np.floor((hi - grid.origin) / grid.resolution - 0.5 + 1e-9).astype(int)
    i0 = np.maximum(i0, 0)
    i1 = np.minimum(i1, np.array(grid.shape) - 1)
    if np.any(i1 < i0):
        return np.zeros((0, 3), int)
    axes = [np.arange(a, b + 1) for a, b in zip(i0, i1)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)


def _geometry_indices(grid, boxes, voxels, field_name) -> np.ndarray:
    parts = [_box_indices(grid, a, b) for a, b in boxes]
    if voxels:
        idx = grid.indices_of(np.array(voxels, float))
        bad = np.any(idx < 0, axis=1) | np.any(idx >= np.array(grid.shape), axis=1)
        if np.any(bad):
            raise ScenarioError(f"{field_name}.voxel_list", "voxel outside bounds")
        parts.append(idx)
    if not parts:
        return np.zeros((0, 3), int)
    return np.unique(np.concatenate(parts), axis=0)


def _random_specs(sc: Scenario, target_codes) -> list[ObstacleSpec]:
    r = sc.random_obstacles
    if r is None or r.count == 0:
        return []
    rng = np.random.default_rng(sc.seed)
    lo, hi = np.array(r.region[0]), np.array(r.region[1])
    smin, smax = np.array(r.size_min), np.array(r.size_max)
    out = []
    tries = 0
    probe = VoxelGrid(sc.resolution, sc.bounds[0], sc.bounds[1])
    while len(out) < r.count and tries < 50 * max(r.count, 1):
        tries += 1
        size = rng.uniform(smin, smax)
        corner = rng.uniform(lo, np.maximum(lo, hi - size))
        idx = _box_indices(probe, corner, corner + size)
        if len(idx) == 0 or np.any(target_codes[idx[:, 0], idx[:, 1], idx[:, 2]] == TARGET):
            continue
        out.append(
            ObstacleSpec(f"random-{len(out)}", ((_tup(corner), _tup(corner + size)),), (), r.trigger)
        )
    return out


def build_world(sc: Scenario) -> World:
    grid = VoxelGrid(sc.resolution, sc.bounds[0], sc.bounds[1])
    tgt = _geometry_indices(grid, sc.target_boxes, sc.target_voxels, "target")
    if len(tgt) == 0:
        raise ScenarioError("target", "target geometry covers no voxel")
    grid.set_labels(tgt, TARGET)
    params = sc.frustum

    hidden = []
    specs = list(sc.obstacles) + _random_specs(sc, grid.codes)
    for i, o in enumerate(specs):
        idx = _geometry_indices(grid, o.boxes, o.voxel_list, f"obstacles[{i}]")
        if len(idx) == 0:
            raise ScenarioError(f"obstacles[{i}]", "obstacle geometry covers no voxel")
        if np.any(grid.codes[idx[:, 0], idx[:, 1], idx[:, 2]] == TARGET):
            raise ScenarioError(f"obstacles[{i}]", "obstacle overlaps the target")
        t = o.trigger
        rng = sc.lidar_range if t.type != "distance" or t.param is None else float(t.param)
        hidden.append(HiddenObstacle(o.id, idx, t.type, rng))
    for ob, spec in zip(hidden, specs):
        if spec.trigger.type == "with":
            ob.linked_to = spec.trigger.param

    surface = SurfaceModel.from_grid(grid)
    all_ids = np.arange(len(surface))
    path = ScanPath()
    intended = np.zeros(len(surface), bool)
    for i, n in enumerate(sc.nominal_path):
        q = CameraConfig(n.p, math.radians(n.theta_deg), math.radians(n.psi_deg))
        if n.kind == VIEWPOINT:
            ids = vis.visible_elements(q, all_ids, grid, surface, params)
            if len(ids) == 0:
                raise ScenarioError(f"nominal_path[{i}]", "viewpoint sees no target element")
            intended[ids] = True
            path.append(PathNode(q, VIEWPOINT, ids, nominal_id=i))
        else:
            path.append(PathNode(q, WAYPOINT))
    return World(sc, grid, surface, hidden, path, params, intended)


def reveal_world(world: World, sensor) -> int:
    """Reveal step honouring linked ("with") triggers."""
    from .world import reveal

    direct = [h for h in world.hidden if h.trigger != "with"]
    n = reveal(world.grid, sensor, direct)
    by_id = {h.id: h for h in world.hidden}
    changed = True
    while changed:
        changed = False
        for h in world.hidden:
            if h.trigger != "with" or h.revealed.all():
                continue
            src = by_id[h.linked_to]
            if src.revealed.any():
                n += world.grid.set_labels(h.indices, OBSTACLE)
                h.revealed[:] = True
                changed = True
    return n
