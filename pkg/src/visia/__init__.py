"""Visibility-aware repair of inspection scan paths."""

from .geom import CameraConfig, FrustumParams, make_frustum
from .scenario import Scenario, build_world, load_scenario, scenario_from_dict
from .sim import RunReport, chamfer, run, vae

__all__ = [
    "CameraConfig",
    "FrustumParams",
    "RunReport",
    "Scenario",
    "build_world",
    "chamfer",
    "load_scenario",
    "make_frustum",
    "run",
    "scenario_from_dict",
    "vae",
]

__version__ = "0.1.0"
