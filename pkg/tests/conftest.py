from __future__ import annotations

import math

import pytest

from leakywire.birman_schwinger import discretize
from leakywire.geometry import (
    CircularArcJointConfig,
    PlanarBumpConfig,
    StraightLineConfig,
    reparametrize_arclength,
)


@pytest.fixture
def on_grid():
    """Sample a spec and resample it on the periodic grid of ``[-L, L)``."""

    def build(spec, half_length: float, num_points: int):
        curve = reparametrize_arclength(spec, 2.0 * half_length / num_points)
        return discretize(curve, half_length, num_points)

    return build


@pytest.fixture
def straight_spec():
    return StraightLineConfig()


@pytest.fixture
def bump_spec():
    return PlanarBumpConfig(amplitude=1.0, width=1.0)


@pytest.fixture
def arc_spec():
    return CircularArcJointConfig(bend_angle=math.pi / 3, radius=1.0)
