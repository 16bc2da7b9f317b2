import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from visia.geom import FrustumParams
from visia.world import OBSTACLE, TARGET, VoxelGrid

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def cam():
    """The desk camera: 80 x 65 degrees, 7 m range."""
    return FrustumParams.from_degrees(80.0, 65.0, 7.0)


@pytest.fixture
def square90():
    return FrustumParams(math.radians(90.0), math.radians(90.0), 5.0)


def empty_grid(res=0.25, lo=(0.0, 0.0, 0.0), hi=(10.0, 10.0, 4.0)):
    return VoxelGrid(res, lo, hi)


def put(grid, points, label=OBSTACLE):
    """Label the voxels containing ``points``."""
    idx = grid.indices_of(np.atleast_2d(points))
    grid.set_labels(idx, label)
    return idx


def wall(grid, x, y0, y1, z0, z1, label=TARGET):
    """Fill a one-voxel-thick wall at ``x`` spanning the given y and z ranges."""
    r = grid.resolution
    ys = np.arange(y0 + r / 2, y1, r)
    zs = np.arange(z0 + r / 2, z1, r)
    pts = np.array([(x, y, z) for y in ys for z in zs])
    return put(grid, pts, label)
