import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lanegame.field import (FieldScene, Grid, LaneLine, build_scene, obstacle_potential,
                            road_lines, road_potential, sample_grid, style_field_params,
                            total_potential)
from lanegame.params import FieldParams, ObstacleFieldParams, RoadFieldParams
from lanegame.world import Road, StyleProfile, VehicleState

P = ObstacleFieldParams()
R = RoadFieldParams()


def reference_lobe(p, ov, x, y):
    """Scalar evaluation straight from the lobe definition."""
    dx2 = (x - ov.x) ** 2 / (2 * p.sigma_x ** 2)
    dy2 = (y - ov.y) ** 2 / (2 * p.sigma_y ** 2)
    if dx2 + dy2 == 0:
        xi = 0.0
    else:
        k = -1.0 if x < ov.x else 1.0
        xi = k * dx2 / math.sqrt(dx2 + dy2)
    return p.amplitude * math.exp(-((dx2 + dy2) ** p.shape) + p.velocity_gain * ov.speed * xi)


coords = st.floats(-60.0, 60.0, allow_nan=False)
vehicles = st.builds(VehicleState, x=st.floats(-20, 20), y=st.floats(-4, 4),
                     speed=st.floats(0.0, 30.0))
lobes = st.builds(ObstacleFieldParams, amplitude=st.floats(0.5, 20), sigma_x=st.floats(1, 15),
                  sigma_y=st.floats(0.5, 3), shape=st.floats(0.5, 2),
                  velocity_gain=st.floats(0.0, 0.2))


@given(lobes, vehicles, coords, coords)
def test_lobe_matches_reference(p, ov, x, y):
    assert obstacle_potential(p, ov, x, y) == pytest.approx(reference_lobe(p, ov, x, y), rel=1e-12)


@given(lobes, vehicles)
def test_center_value_is_amplitude(p, ov):
    assert obstacle_potential(p, ov, ov.x, ov.y) == p.amplitude


@given(lobes, vehicles, coords, st.floats(0, 10))
def test_lateral_symmetry(p, ov, x, d):
    a = obstacle_potential(p, ov, x, ov.y + d)
    b = obstacle_potential(p, ov, x, ov.y - d)
    assert abs(a - b) <= 1e-12 * max(1.0, a)


@given(lobes, vehicles, st.floats(0, 40), st.floats(-3, 3))
def test_standing_vehicle_symmetric_front_back(p, ov, d, dy):
    ov = ov.replace(speed=0.0)
    a = obstacle_potential(p, ov, ov.x + d, ov.y + dy)
    b = obstacle_potential(p, ov, ov.x - d, ov.y + dy)
    assert abs(a - b) <= 1e-12 * max(1.0, a)


@given(vehicles, st.floats(0.5, 30), st.floats(-2, 2))
def test_moving_vehicle_reaches_farther_ahead(ov, d, dy):
    ov = ov.replace(speed=max(ov.speed, 1.0))
    front = obstacle_potential(P, ov, ov.x + d, ov.y + dy)
    back = obstacle_potential(P, ov, ov.x - d, ov.y + dy)
    assert front > back


@given(st.floats(0.5, 30), st.floats(0.01, 0.2))
def test_asymmetry_grows_with_velocity_gain(d, gain):
    ov = VehicleState(0.0, 0.0, 20.0)
    lo = ObstacleFieldParams(velocity_gain=gain)
    hi = ObstacleFieldParams(velocity_gain=gain * 1.5)
    ratio = lambda p: obstacle_potential(p, ov, d, 0.3) / obstacle_potential(p, ov, -d, 0.3)
    assert ratio(hi) > ratio(lo)


@given(vehicles, st.floats(0, 2 * math.pi))
def test_lobe_positive_and_decays(ov, angle):
    values = [obstacle_potential(P, ov, ov.x + r * math.cos(angle), ov.y + r * math.sin(angle))
              for r in (1.0, 10.0, 100.0, 1000.0)]
    assert all(v >= 0 for v in values)
    assert values[-1] < 1e-12


def test_road_potential_hand_values():
    assert road_potential(R, R.safety_margin + 0.5 * R.vehicle_width) == R.amplitude
    assert road_potential(R, 0.0) == pytest.approx(R.amplitude * math.exp(0.2 + 0.9), rel=1e-15)
    with pytest.raises(ValueError):
        road_potential(R, -0.1)


@given(st.floats(0, 20), st.floats(0.001, 5))
def test_road_potential_strictly_decreasing(d, step):
    assert road_potential(R, d) > road_potential(R, d + step)


def test_empty_scene_is_zero():
    assert total_potential(FieldScene(), 3.0, 1.0) == 0.0


@given(coords, coords)
def test_single_obstacle_scene_equals_its_lobe(x, y):
    ov = VehicleState(2.0, 1.0, 15.0)
    assert total_potential(FieldScene(((ov, P),)), x, y) == obstacle_potential(P, ov, x, y)


@given(coords, st.floats(-6, 6))
def test_additivity(x, y):
    a = FieldScene(((VehicleState(0.0, 1.8, 20.0), P),), (LaneLine(3.75, R),))
    b = FieldScene(((VehicleState(15.0, -1.8, 12.0), style_field_params(
        P, StyleProfile.from_label("aggressive"))),), (LaneLine(0.0, R, "divider"),))
    whole = total_potential(a + b, x, y)
    parts = total_potential(a, x, y) + total_potential(b, x, y)
    assert abs(whole - parts) <= 1e-12 * max(1.0, abs(whole))


def test_style_reach_ordering():
    base = ObstacleFieldParams()
    params = {s: style_field_params(base, StyleProfile.from_label(s))
              for s in ("aggressive", "normal", "cautious")}
    assert params["normal"] == base
    assert params["aggressive"].sigma_x > params["normal"].sigma_x > params["cautious"].sigma_x
    assert params["aggressive"].sigma_y == base.sigma_y
    ov = VehicleState(0.0, 0.0, 15.0)
    assert obstacle_potential(params["aggressive"], ov, 12.0, 0.0) > \
        obstacle_potential(params["cautious"], ov, 12.0, 0.0)


def test_sigma_y_scaling_is_optional():
    agg = StyleProfile.from_label("aggressive")
    assert style_field_params(P, agg, scale_sigma_y=True).sigma_y == P.sigma_y * 1.5


def test_road_lines_cover_every_mark():
    road = Road(3, 3.75)
    lines = road_lines(road, FieldParams())
    assert [ln.y for ln in lines] == [5.625, 1.875, -1.875, -5.625]
    assert [ln.kind for ln in lines] == ["edge", "divider", "divider", "edge"]


def test_grid_of_empty_scene_is_all_zero():
    g = sample_grid(FieldScene(), (0, 10), (-2, 2), 0.5)
    assert g.values.shape == (9, 21) and not g.values.any()


def test_one_cell_grid():
    scene = FieldScene(((VehicleState(0.0, 0.0, 10.0), P),))
    g = sample_grid(scene, (3.0, 3.0), (0.5, 0.5), 1.0)
    assert g.values.shape == (1, 1)
    assert g.values[0, 0] == total_potential(scene, 3.0, 0.5)


def test_standing_obstacle_grid_mirror_symmetric():
    scene = FieldScene(((VehicleState(0.0, 0.0, 0.0), P),))
    g = sample_grid(scene, (-20, 20), (-3, 3), 0.25)
    assert np.max(np.abs(g.values - g.values[:, ::-1])) <= 1e-12


def test_degenerate_grid_rejected():
    with pytest.raises(ValueError):
        sample_grid(FieldScene(), (5, 0), (0, 1), 0.5)
    with pytest.raises(ValueError):
        sample_grid(FieldScene(), (0, 5), (0, 1), 0.0)


def test_grid_text_round_trip_is_exact():
    road = Road(3, 3.75)
    movers = [(VehicleState(20.0, 0.0, 15.0, lane=2), StyleProfile.from_label("normal"))]
    g = sample_grid(build_scene(road, movers), (0, 40), (-5.625, 5.625), 0.75)
    text = g.to_text()
    back = Grid.from_text(text)
    assert np.array_equal(back.values, g.values)
    assert np.array_equal(back.xs, g.xs) and np.array_equal(back.ys, g.ys)
    assert back.to_text() == text


def lobe_apex(p, ov):
    """Longitudinal position of a lobe's maximum (shape 1): the velocity term shifts it ahead."""
    return ov.x + p.velocity_gain * ov.speed * p.sigma_x / math.sqrt(2.0)


@pytest.mark.parametrize("speed", [0.0, 15.0])
def test_three_lane_scene_peaks_sit_on_vehicles_or_lines(speed):
    road = Road(3, 3.75)
    cars = [VehicleState(20.0, 3.75, speed, lane=1), VehicleState(45.0, 0.0, speed, lane=2),
            VehicleState(70.0, -3.75, speed, lane=3)]
    movers = [(c, StyleProfile.from_label("normal")) for c in cars]
    scene = build_scene(road, movers)
    res = 0.25
    g = sample_grid(scene, (0, 100), (-5.5, 5.5), res)
    v = g.values
    inner = v[1:-1, 1:-1]
    neighbours = np.stack([v[:-2, 1:-1], v[2:, 1:-1], v[1:-1, :-2], v[1:-1, 2:]])
    peaks = np.argwhere(inner > neighbours.max(axis=0))
    marks = [y for y, _ in road.lane_marks()]
    apexes = [(lobe_apex(P, c), c.y) for c in cars]
    found = set()
    for iy, ix in peaks:
        x, y = g.xs[ix + 1], g.ys[iy + 1]
        hits = [i for i, (ax, ay) in enumerate(apexes) if abs(x - ax) <= res and abs(y - ay) <= res]
        found.update(hits)
        assert hits or any(abs(y - m) <= res for m in marks)
    assert found == {0, 1, 2}
    bare = build_scene(road, [])
    assert total_potential(scene, 2.0, -3.75) - total_potential(bare, 2.0, -3.75) < 1e-6
    assert all(total_potential(scene, ax, ay) > 5 + total_potential(bare, ax, ay)
               for ax, ay in apexes)
