import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_ssf.scene import (
    Box,
    SensingRegion,
    TrajectorySpec,
    beam_containing,
    build_beam_grid,
    in_region,
    los_blocked,
    target_position,
    target_velocity,
)

REGION = SensingRegion(math.radians(45), math.radians(135), 20.0, 120.0, 0.0, 20)
BS = (0.0, 0.0, 10.0)


def test_linear_trajectory_moves_at_speed():
    spec = TrajectorySpec("linear", (0, 50, 1.5), heading=0.0, speed=3.0)
    assert np.allclose(target_position(spec, 2.0), (6.0, 50.0, 1.5))
    assert np.allclose(target_velocity(spec, 2.0), (3.0, 0.0, 0.0))


def test_quadratic_is_parabolic():
    spec = TrajectorySpec("quadratic", (0, 0, 0), heading=0.0, speed=2.0, curvature=1.0)
    # x = v t, y = a t^2 / 2
    assert np.allclose(target_position(spec, 4.0), (8.0, 8.0, 0.0))
    assert np.allclose(target_velocity(spec, 4.0), (2.0, 4.0, 0.0))


def test_kink_is_continuous_in_position():
    spec = TrajectorySpec("linear-with-direction-change", (0, 40, 0), heading=0.0, speed=3.0,
                          kink_time=5.0, kink_heading=math.pi / 2)
    eps = 1e-9
    a, b = np.asarray(target_position(spec, 5.0 - eps)), np.asarray(target_position(spec, 5.0 + eps))
    assert np.linalg.norm(a - b) < 1e-7
    assert np.allclose(target_position(spec, 7.0), (15.0, 46.0, 0.0))
    assert np.allclose(target_velocity(spec, 4.9), (3, 0, 0))
    assert np.allclose(target_velocity(spec, 5.1), (0, 3, 0), atol=1e-12)


def test_time_outside_horizon_rejected():
    spec = TrajectorySpec("linear", (0, 0, 0), 0.0, 1.0, horizon=10.0)
    with pytest.raises(ValueError):
        target_position(spec, 10.5)
    with pytest.raises(ValueError):
        TrajectorySpec("spiral", (0, 0, 0), 0.0, 1.0)


@given(st.floats(0, 10), st.floats(-math.pi, math.pi), st.floats(0, 5), st.floats(-1, 1))
def test_trajectory_deterministic(t, heading, speed, curv):
    spec = TrajectorySpec("quadratic", (1, 2, 3), heading, speed, curvature=curv)
    assert target_position(spec, t) == target_position(spec, t)


def test_beam_grid_partitions_sweep():
    grid = build_beam_grid(REGION)
    assert grid.n_beam == 20
    assert math.isclose(grid.width, math.radians(4.5))
    assert math.isclose(grid.azimuths[0], math.radians(45 + 2.25))


@given(st.floats(math.radians(45) + 1e-9, math.radians(135) - 1e-9), st.floats(20.001, 119.999))
def test_every_region_point_has_exactly_one_beam(az, rng):
    grid = build_beam_grid(REGION)
    p = (BS[0] + rng * math.cos(az), BS[1] + rng * math.sin(az), 0.0)
    b = beam_containing(grid, BS, p)
    assert b is not None and 0 <= b < 20
    lo = REGION.az_lo + b * grid.width
    assert lo - 1e-9 <= az <= lo + grid.width + 1e-9


def test_outside_region_has_no_beam():
    grid = build_beam_grid(REGION)
    assert beam_containing(grid, BS, (50.0, -10.0, 0.0)) is None
    assert not in_region(REGION, BS, (0.0, 5.0, 0.0))


def test_los_blocked_slab():
    box = Box((4, -1, 0), (6, 1, 5))
    assert los_blocked((0, 0, 1), (10, 0, 1), box)
    assert not los_blocked((0, 3, 1), (10, 3, 1), box)
    assert not los_blocked((0, 0, 1), (3, 0, 1), box)
    assert not los_blocked((0, 0, 1), (10, 0, 1), None)


@given(st.tuples(*[st.floats(-20, 20)] * 3), st.tuples(*[st.floats(-20, 20)] * 3))
def test_los_blocked_symmetric_and_endpoint_inside(a, b):
    box = Box((-2, -2, -2), (2, 2, 2))
    assert los_blocked(a, b, box) == los_blocked(b, a, box)
    if box.contains(a):
        assert los_blocked(a, b, box)
