import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanegame.field import FieldScene, build_scene
from lanegame.params import ObstacleFieldParams, PlannerParams
from lanegame.planner import (DegenerateSpeed, candidate_set, plan_cost, rollout, solve_mpc,
                              state_rate, step)
from lanegame.world import Road, StyleProfile, VehicleState

EMPTY = FieldScene()
PP = PlannerParams()


def arc(v, u, t):
    """Closed-form constant-speed turn with constant lateral acceleration."""
    phi = u * t / v
    radius = v * v / u
    return radius * math.sin(phi), radius * (1.0 - math.cos(phi)), phi


def test_state_rate_examples():
    assert tuple(state_rate(VehicleState(0, 0, 20.0), 0.0)) == (0.0, 0.0, 20.0, 0.0)
    assert state_rate(VehicleState(0, 0, 10.0), 1.0)[1] == 0.1
    dv, dphi, dx, dy = state_rate(VehicleState(0, 0, 5.0, heading=math.pi / 2), 0.0)
    assert abs(dx) <= 1e-12 and abs(dy - 5.0) <= 1e-12


def test_state_rate_degenerate_speed():
    with pytest.raises(DegenerateSpeed):
        state_rate(VehicleState(0, 0, 0.2), 1.0)


def test_step_speed_update():
    assert step(VehicleState(0, 0, 10.0), 0.0, 1.0, 0.1).speed == pytest.approx(10.1, abs=1e-15)
    assert step(VehicleState(0, 0, 10.0), 0.0, 1.0, 0.1, method="euler").speed == \
        pytest.approx(10.1, abs=1e-15)


def test_euler_step_is_one_rate_evaluation():
    s = VehicleState(3.0, -1.0, 17.0, heading=0.05, long_accel=0.5)
    rate = state_rate(s, 0.7)
    out = step(s, 0.7, 0.5, 0.1, method="euler")
    assert (out.speed, out.heading, out.x, out.y) == tuple(
        np.array([s.speed, s.heading, s.x, s.y]) + 0.1 * rate)


def test_step_clamps_speed_and_inputs():
    s = VehicleState(0, 0, 24.9)
    out = step(s, 9.0, 3.0, 0.1, v_max=25.0, a_bounds=(-4.0, 2.0), u_bounds=(-3.0, 3.0))
    assert out.speed == 25.0 and out.long_accel == 2.0 and out.lat_accel == 3.0
    assert step(VehicleState(0, 0, 0.1), 0.0, -4.0, 0.1).speed == 0.0
    with pytest.raises(ValueError):
        step(s, 0.0, 0.0, 0.0)


def test_straight_line_keeps_lateral_position():
    s = VehicleState(0.0, 1.875, 20.0)
    for _ in range(100):
        s = step(s, 0.0, 0.0, 0.1)
    assert s.y == 1.875 and s.heading == 0.0
    assert s.x == pytest.approx(200.0, abs=1e-9)


def integrate(v, u, dt, t_end, method):
    s = VehicleState(0.0, 0.0, v)
    for _ in range(round(t_end / dt)):
        s = step(s, u, 0.0, dt, method=method)
    return s


@pytest.mark.parametrize("v", [15.0, 20.0, 25.0])
@pytest.mark.parametrize("u", [-0.5, 0.5, 1.0])
def test_default_integrator_tracks_the_closed_form_turn(v, u):
    s = integrate(v, u, 0.1, 10.0, PP.integrator)
    x, y, phi = arc(v, u, 10.0)
    assert math.hypot(s.x - x, s.y - y) < 1e-2
    assert abs(s.heading - phi) < 1e-4


def test_rollout_of_zero_controls_in_empty_scene():
    s = VehicleState(0.0, 0.0, 20.0)
    r = rollout(s, [0.0] * PP.control_horizon, 0.0, PP, EMPTY, 0.0)
    assert len(r.predicted_states) == PP.prediction_horizon
    assert not r.predicted_outputs.any() and not r.lane_errors.any()
    assert [p.x for p in r.predicted_states] == pytest.approx(
        [20.0 * 0.1 * (i + 1) for i in range(PP.prediction_horizon)])


def test_rollout_holds_last_control_over_the_tail():
    params = PlannerParams(prediction_horizon=5, control_horizon=4)
    s = VehicleState(0.0, 0.0, 20.0)
    r = rollout(s, [0.5, -0.5, 1.0, 2.0], 0.0, params, EMPTY, 0.0)
    assert [p.lat_accel for p in r.predicted_states] == [0.5, -0.5, 1.0, 2.0, 2.0]
    manual = s
    for u in (0.5, -0.5, 1.0, 2.0, 2.0):
        manual = step(manual, u, 0.0, 0.1, method=params.integrator)
    assert r.predicted_states[-1] == manual


def test_rollout_rejects_wrong_control_length():
    with pytest.raises(ValueError):
        rollout(VehicleState(0, 0, 20.0), [0.0], 0.0, PP, EMPTY, 0.0)


def test_outputs_rise_while_closing_on_an_obstacle():
    ahead = VehicleState(60.0, 0.0, 10.0)
    scene = FieldScene(((ahead, ObstacleFieldParams()),))
    r = rollout(VehicleState(30.0, 0.3, 20.0), [0.0] * 3, 0.0, PP, scene, 0.0, moving=True)
    assert np.all(np.diff(r.predicted_outputs) > 0)


def test_plan_cost_examples():
    s = VehicleState(0.0, 0.0, 20.0)
    zero = rollout(s, [0.0] * 3, 0.0, PP, EMPTY, 0.0)
    assert plan_cost(zero, PP) == 0.0
    counting = PlannerParams(q_field=1.0, q_lane=0.0, r_control=0.0)
    ones = zero.__class__(zero.control_sequence, zero.predicted_states,
                          np.ones(PP.prediction_horizon), zero.lane_errors)
    assert plan_cost(ones, counting) == PP.prediction_horizon
    only_u = PlannerParams(q_field=0.0, q_lane=0.0, r_control=0.1)
    a = rollout(s, [0.5, -1.0, 1.0], 0.0, only_u, EMPTY, 0.0)
    b = rollout(s, [1.0, -2.0, 2.0], 0.0, only_u, EMPTY, 0.0)
    assert plan_cost(b, only_u) == pytest.approx(4 * plan_cost(a, only_u), rel=1e-15)


def test_plan_cost_checks_lengths():
    r = rollout(VehicleState(0, 0, 20.0), [0.0] * 3, 0.0, PP, EMPTY, 0.0)
    with pytest.raises(ValueError):
        plan_cost(r, PlannerParams(prediction_horizon=10))


def test_candidate_set_respects_bounds():
    c = candidate_set(PlannerParams(u_min=-1.0, u_max=1.0))
    assert c.shape == (5 ** 3, 3) and c.min() >= -1.0 and c.max() <= 1.0
    assert candidate_set(PP).shape == (7 ** 3, 3)


def test_on_centerline_in_empty_scene_nothing_to_do():
    r = solve_mpc(VehicleState(0.0, 1.875, 20.0), 0.0, EMPTY, 1.875, PP)
    assert r.cost == 0.0 and r.control_sequence == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("offset", [3.75, -3.75])
def test_first_control_steers_toward_the_target(offset):
    r = solve_mpc(VehicleState(0.0, 0.0, 20.0), 0.0, EMPTY, offset, PP)
    assert math.copysign(1.0, r.first_control) == math.copysign(1.0, offset)
    assert r.first_control != 0.0


def test_dodging_an_obstacle_beats_holding_course():
    road = Road(2, 3.75)
    ahead = VehicleState(25.0, -1.875, 10.0, lane=2)
    scene = build_scene(road, [(ahead, StyleProfile.from_label("normal"))])
    s = VehicleState(0.0, -1.875, 20.0, lane=2)
    r = solve_mpc(s, 0.0, scene, 1.875, PP)
    zero = rollout(s, [0.0] * 3, 0.0, PP, scene, 1.875)
    assert r.cost < plan_cost(zero, PP)


def random_scene(rng):
    road = Road(rng.choice([2, 3]), 3.75)
    cars = []
    for _ in range(rng.randint(0, 3)):
        lane = rng.randint(1, road.lane_count)
        cars.append((VehicleState(rng.uniform(-20, 60), road.lane_center(lane),
                                  rng.uniform(0, 25), lane=lane),
                     StyleProfile.from_label(rng.choice(["aggressive", "normal", "cautious"]))))
    host_lane = rng.randint(1, road.lane_count)
    host = VehicleState(0.0, road.lane_center(host_lane) + rng.uniform(-1, 1),
                        rng.uniform(5, 25), heading=rng.uniform(-0.05, 0.05), lane=host_lane)
    target = road.lane_center(min(max(host_lane + rng.choice([-1, 0, 1]), 1), road.lane_count))
    return build_scene(road, cars), host, target


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6))
def test_solution_beats_every_candidate(seed):
    rng = random.Random(seed)
    scene, host, target = random_scene(rng)
    r = solve_mpc(host, rng.choice([-1.0, 0.0, 1.0]), scene, target, PP)
    a_x = r.predicted_states[0].long_accel
    costs = [plan_cost(rollout(host, c, a_x, PP, scene, target), PP) for c in candidate_set(PP)]
    assert r.cost == min(costs)
    assert r.cost <= plan_cost(rollout(host, [0.0] * 3, a_x, PP, scene, target), PP)
    assert all(PP.u_min <= u <= PP.u_max for u in r.control_sequence)
    assert abs(plan_cost(r, PP) - r.cost) <= 1e-9 * max(1.0, r.cost)


@settings(max_examples=15)
@given(st.floats(-3.0, 3.0), st.floats(12.0, 25.0), st.floats(-0.05, 0.05))
def test_receding_horizon_shift_is_feasible(y0, v, phi):
    target = 1.875
    s = VehicleState(0.0, y0, v, heading=phi)
    first = solve_mpc(s, 0.0, EMPTY, target, PP)
    nxt = step(s, first.first_control, 0.0, PP.sample_time, method=PP.integrator)
    assert nxt == first.predicted_states[0]
    u = first.control_sequence
    shifted = rollout(nxt, list(u[1:]) + [u[-1]], 0.0, PP, EMPTY, target)
    tail = (PP.q_lane * float(np.sum(first.lane_errors[1:] ** 2))
            + PP.r_control * (u[1] ** 2 + u[2] ** 2))
    extra = PP.q_lane * shifted.lane_errors[-1] ** 2 + PP.r_control * u[-1] ** 2
    assert plan_cost(shifted, PP) == pytest.approx(tail + extra, rel=1e-9, abs=1e-12)
    again = solve_mpc(nxt, 0.0, EMPTY, target, PP)
    assert again.cost <= tail + extra + 1e-9


def test_slow_vehicle_gets_no_steering():
    r = solve_mpc(VehicleState(0.0, 0.0, 0.2), 0.0, EMPTY, 3.75, PP)
    assert r.control_sequence == (0.0, 0.0, 0.0)


def test_solver_ties_resolve_to_first_candidate():
    params = PlannerParams(q_field=0.0, q_lane=0.0, r_control=0.0)
    r = solve_mpc(VehicleState(0.0, 0.0, 20.0), 0.0, EMPTY, 0.0, params)
    assert r.control_sequence == tuple(candidate_set(params)[0])
