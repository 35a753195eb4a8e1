"""Kinematic point-mass prediction and the enumerating receding-horizon planner.

State vector is (speed, heading, X, Y); the control is the lateral
acceleration. Longitudinal acceleration is an input held over the horizon;
it comes from the decision layer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .field import FieldScene, total_potential
from .params import PlannerParams
from .world import VehicleState

SPEED_FLOOR = 0.5


class DegenerateSpeed(ValueError):
    """Heading rate is undefined at (near) standstill."""


@dataclass(frozen=True)
class PlanResult:
    control_sequence: tuple[float, ...]
    predicted_states: tuple[VehicleState, ...]
    predicted_outputs: np.ndarray
    lane_errors: np.ndarray
    cost: float = math.nan

    @property
    def first_control(self) -> float:
        return self.control_sequence[0]


def state_rate(state: VehicleState, u: float, speed_floor: float = SPEED_FLOOR) -> np.ndarray:
    """(dv, dphi, dX, dY) for lateral acceleration ``u`` and the state's long_accel."""
    if state.speed <= speed_floor:
        raise DegenerateSpeed(f"speed {state.speed} at or below floor {speed_floor}")
    v, phi = state.speed, state.heading
    return np.array([state.long_accel, u / v, v * math.cos(phi), v * math.sin(phi)])


def _rates(v, phi, ax, u, floor):
    slow = v < floor
    safe_v = np.where(slow, 1.0, v)
    return (np.broadcast_to(ax, np.shape(v)),
            np.where(slow, 0.0, u / safe_v),
            v * np.cos(phi),
            v * np.sin(phi))


def _advance(v, phi, x, y, ax, u, dt, floor, method):
    if method == "euler":
        dv, dp, dx, dy = _rates(v, phi, ax, u, floor)
        return v + dt * dv, phi + dt * dp, x + dt * dx, y + dt * dy
    k1 = _rates(v, phi, ax, u, floor)
    k2 = _rates(v + 0.5 * dt * k1[0], phi + 0.5 * dt * k1[1], ax, u, floor)
    k3 = _rates(v + 0.5 * dt * k2[0], phi + 0.5 * dt * k2[1], ax, u, floor)
    k4 = _rates(v + dt * k3[0], phi + dt * k3[1], ax, u, floor)
    out = []
    for i, s in enumerate((v, phi, x, y)):
        out.append(s + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]))
    return tuple(out)


def step(state: VehicleState, u: float, a_x: float, dt: float, *, v_max: float = math.inf,
         a_bounds: tuple[float, float] = (-math.inf, math.inf),
         u_bounds: tuple[float, float] = (-math.inf, math.inf),
         speed_floor: float = SPEED_FLOOR, method: str = "rk4") -> VehicleState:
    """Advance one sample. Speed is clamped into [0, v_max] afterwards."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    a_x = min(max(a_x, a_bounds[0]), a_bounds[1])
    u = min(max(u, u_bounds[0]), u_bounds[1])
    if state.speed <= speed_floor and u != 0:
        raise DegenerateSpeed(f"speed {state.speed} at or below floor {speed_floor}")
    v, phi, x, y = _advance(state.speed, state.heading, state.x, state.y, a_x, u, dt,
                            speed_floor, method)
    v = min(max(float(v), 0.0), v_max)
    return state.replace(x=float(x), y=float(y), speed=v, heading=float(phi),
                         long_accel=a_x, lat_accel=u)


def _rollout_batch(state: VehicleState, controls: np.ndarray, a_x: float, params: PlannerParams,
                   scene: FieldScene, target_y: float, v_max: float, moving: bool = True):
    """Roll out many control sequences at once; ``controls`` has shape (n, N_c)."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    n = controls.shape[0]
    n_p, n_c, dt = params.prediction_horizon, params.control_horizon, params.sample_time
    v = np.full(n, state.speed)
    phi = np.full(n, state.heading)
    x = np.full(n, state.x)
    y = np.full(n, state.y)
    traj = np.empty((n, n_p, 4))
    outputs = np.empty((n, n_p))
    for i in range(n_p):
        u = controls[:, min(i, n_c - 1)]
        v, phi, x, y = _advance(v, phi, x, y, a_x, u, dt, params.speed_floor, params.integrator)
        v = np.clip(v, 0.0, v_max)
        traj[:, i] = np.stack([v, phi, x, y], axis=1)
        sc = scene.advanced((i + 1) * dt) if moving else scene
        outputs[:, i] = total_potential(sc, x, y)
    lane_errors = traj[:, :, 3] - target_y
    return traj, outputs, lane_errors


def _costs(outputs, lane_errors, controls, params: PlannerParams):
    return (params.q_field * np.sum(outputs ** 2, axis=-1)
            + params.q_lane * np.sum(lane_errors ** 2, axis=-1)
            + params.r_control * np.sum(np.asarray(controls) ** 2, axis=-1))


def _to_result(state, controls, traj, outputs, lane_errors, a_x, cost=math.nan):
    states = tuple(
        state.replace(speed=float(r[0]), heading=float(r[1]), x=float(r[2]), y=float(r[3]),
                      long_accel=a_x, lat_accel=float(controls[min(i, len(controls) - 1)]))
        for i, r in enumerate(traj)
    )
    return PlanResult(tuple(float(c) for c in controls), states, outputs.copy(),
                      lane_errors.copy(), cost)


def rollout(state: VehicleState, controls, a_x: float, params: PlannerParams, scene: FieldScene,
            target_y: float, *, v_max: float = math.inf, moving: bool = True) -> PlanResult:
    """Predict N_p steps; controls past N_c repeat the last one. Cost is left unset."""
    controls = np.asarray(controls, dtype=float)
    if controls.shape != (params.control_horizon,):
        raise ValueError(f"expected {params.control_horizon} controls, got {controls.shape}")
    traj, out, err = _rollout_batch(state, controls[None, :], a_x, params, scene, target_y,
                                    v_max, moving)
    return _to_result(state, controls, traj[0], out[0], err[0], a_x)


def plan_cost(result: PlanResult, params: PlannerParams) -> float:
    if len(result.predicted_outputs) != params.prediction_horizon \
            or len(result.lane_errors) != params.prediction_horizon \
            or len(result.control_sequence) != params.control_horizon:
        raise ValueError("sequence lengths do not match the horizons")
    return float(_costs(np.asarray(result.predicted_outputs), np.asarray(result.lane_errors),
                        np.asarray(result.control_sequence), params))


def candidate_set(params: PlannerParams) -> np.ndarray:
    """All N_c-long sequences over the per-step candidate values inside [u_min, u_max]."""
    values = [u for u in params.candidates if params.u_min <= u <= params.u_max]
    if not values:
        values = [min(max(0.0, params.u_min), params.u_max)]
    return np.array(list(itertools.product(values, repeat=params.control_horizon)), dtype=float)


def solve_mpc(state: VehicleState, a_x: float, scene: FieldScene, target_y: float,
              params: PlannerParams | None = None, *, v_max: float = math.inf,
              moving: bool = True) -> PlanResult:
    """Exhaustively search the candidate set for the cheapest control sequence.

    Ties resolve to the earliest candidate in enumeration order.
    """
    params = params or PlannerParams()
    cands = candidate_set(params)
    if state.speed < params.speed_floor:
        cands = np.zeros((1, params.control_horizon))
    traj, out, err = _rollout_batch(state, cands, a_x, params, scene, target_y, v_max, moving)
    costs = _costs(out, err, cands, params)
    best = int(np.argmin(costs))
    return _to_result(state, cands[best], traj[best], out[best], err[best], a_x,
                      float(costs[best]))
