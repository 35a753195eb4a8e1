"""Leader-follower lane-change game between the host and obstacle vehicles.

The host (leader) picks a lane decision and a longitudinal acceleration; the
obstacle in the target lane (follower) best-responds with an acceleration of
its own. Costs are scored on the snapshot predicted ``GameParams.horizon``
seconds ahead with every action pair held constant, so that accelerations
actually move gaps and speeds. The host minimizes its worst case over the
follower's whole best-response set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import CostWeights, GameParams, VehicleGeometry
from .world import Road, StyleProfile, Vehicle, VehicleState

ABSENT_GAP = 1e6
LANE_LABELS = {-1: "left", 0: "stay", 1: "right"}


class InfeasibleDecision(RuntimeError):
    """No host action satisfies the speed/acceleration bounds."""


@dataclass(frozen=True)
class HostAction:
    lane_decision: int
    long_accel: float

    def __post_init__(self):
        a = self.lane_decision
        if (a + 1) * a * (a - 1) != 0:
            raise ValueError(f"lane decision must be -1, 0 or 1, got {a}")

    @property
    def label(self) -> str:
        return LANE_LABELS[self.lane_decision]


@dataclass(frozen=True)
class CostBreakdown:
    safety: float
    comfort: float
    efficiency: float
    total: float

    @classmethod
    def combine(cls, safety, comfort, efficiency, weights) -> "CostBreakdown":
        ws, wc, we = weights
        return cls(safety, comfort, efficiency, ws * safety + wc * comfort + we * efficiency)


@dataclass(frozen=True)
class Candidate:
    """One evaluated host action: its worst case and the follower's response set."""

    action: HostAction
    worst_case: float
    follower: str | None
    best_responses: tuple[float, ...]


@dataclass(frozen=True)
class DecisionOutcome:
    host_action: HostAction
    follower_responses: dict[str, float]
    host_cost: CostBreakdown
    follower_costs: dict[str, CostBreakdown]
    candidates: tuple[Candidate, ...] = field(default=(), repr=False)

    @property
    def label(self) -> str:
        return self.host_action.label


@dataclass(frozen=True)
class Snapshot:
    road: Road
    host: VehicleState
    others: tuple[Vehicle, ...]


def indicator(delta_v: float) -> int:
    """1 when the rear vehicle is closing in (front slower), else 0."""
    return 1 if delta_v < 0 else 0


def pair_safety(front: VehicleState | None, rear: VehicleState, k_v: float, k_s: float,
                nu: float, safety_length: float, v_absent: float = 0.0) -> float:
    """Gap/closing-speed threat between two vehicles on the same lane.

    ``front`` may be ``None``: it is then a phantom far ahead at ``v_absent``.
    Overlapping vehicles (net gap below zero) count as a zero gap.
    """
    if front is None:
        dv = max(v_absent - rear.speed, 0.0)
        ds = ABSENT_GAP
    else:
        dv = front.speed - rear.speed
        ds = max(front.x - rear.x - safety_length, 0.0)
    return k_v * indicator(dv) / (dv * dv + nu) + k_s / (ds * ds + nu)


def _ordered_pair(a: VehicleState, b: VehicleState):
    return (a, b) if a.x >= b.x else (b, a)


def lateral_safety(host: VehicleState, obstacle: VehicleState | None, weights: CostWeights,
                   safety_length: float, target_ahead: VehicleState | None = None) -> float:
    if obstacle is None:
        rear = host
        return pair_safety(None, rear, weights.k_v_lat, weights.k_s_lat, weights.nu, safety_length)
    front, rear = _ordered_pair(host, obstacle)
    cost = pair_safety(front, rear, weights.k_v_lat, weights.k_s_lat, weights.nu, safety_length)
    if target_ahead is not None and target_ahead is not obstacle:
        cost += pair_safety(target_ahead, host, weights.k_v_lat, weights.k_s_lat,
                            weights.nu, safety_length)
    return cost


def host_cost(host: VehicleState, ahead: VehicleState | None, obstacle: VehicleState | None,
              action: HostAction, road: Road, weights: CostWeights, style: Sequence[float], *,
              target_ahead: VehicleState | None = None, safety_length: float = 5.0,
              lat_accel: float = 1.0) -> CostBreakdown:
    """Safety / comfort / efficiency cost of the host for one action.

    ``ahead`` is the vehicle in front on the host's own lane; ``obstacle`` and
    ``target_ahead`` live in the target lane. Missing vehicles are phantoms
    far ahead at the lane speed limit.
    """
    alpha = action.lane_decision
    lane = host.lane
    target = lane + alpha
    sel_log = abs(abs(alpha) - 1)
    sel_lat = abs(alpha)

    safety = 0.0
    if sel_log:
        safety += sel_log * pair_safety(ahead, host, weights.k_v_log, weights.k_s_log, weights.nu,
                                        safety_length, v_absent=road.speed_limit(lane))
    if sel_lat:
        safety += sel_lat * lateral_safety(host, obstacle, weights, safety_length, target_ahead)

    comfort = weights.k_ax * action.long_accel ** 2 + sel_lat * weights.k_ay * lat_accel ** 2

    ref = ahead if alpha == 0 else target_ahead
    v_ref = road.speed_limit(target)
    if ref is not None:
        v_ref = min(v_ref, ref.speed)
    efficiency = (host.speed - v_ref) ** 2
    return CostBreakdown.combine(safety, comfort, efficiency, style)


def obstacle_cost(obstacle: VehicleState, obstacle_ahead: VehicleState | None,
                  host: VehicleState, host_action: HostAction, follower_accel: float,
                  road: Road, weights: CostWeights, style: Sequence[float], *,
                  target_ahead: VehicleState | None = None,
                  safety_length: float = 5.0) -> CostBreakdown:
    """Cost of the obstacle vehicle answering ``host_action`` with ``follower_accel``.

    While the host keeps its lane the obstacle only follows its own leader;
    once the host heads for the obstacle's lane, the obstacle shares the
    host's lateral threat term instead.
    """
    alpha = host_action.lane_decision
    lane = obstacle.lane
    safety = 0.0
    if alpha == 0:
        safety = pair_safety(obstacle_ahead, obstacle, weights.k_v_log, weights.k_s_log,
                             weights.nu, safety_length, v_absent=road.speed_limit(lane))
    else:
        safety = lateral_safety(host, obstacle, weights, safety_length, target_ahead)
    comfort = weights.k_ax * follower_accel ** 2
    v_ref = road.speed_limit(lane)
    if obstacle_ahead is not None:
        v_ref = min(v_ref, obstacle_ahead.speed)
    efficiency = (obstacle.speed - v_ref) ** 2
    return CostBreakdown.combine(safety, comfort, efficiency, style)


def predict(state: VehicleState, accel: float, horizon: float, v_max: float) -> VehicleState:
    """Constant-acceleration straight-line motion with speed held inside [0, v_max]."""
    v0 = state.speed
    if accel > 0 and v0 < v_max:
        t_sat = min(horizon, (v_max - v0) / accel)
    elif accel < 0 and v0 > 0:
        t_sat = min(horizon, v0 / -accel)
    else:
        t_sat = 0.0
    v1 = v0 + accel * t_sat
    dx = v0 * t_sat + 0.5 * accel * t_sat ** 2 + v1 * (horizon - t_sat)
    return state.replace(x=state.x + dx, speed=v1, long_accel=accel)


def nearest_ahead(x: float, states: Sequence[VehicleState]) -> VehicleState | None:
    best = None
    for s in states:
        if s.x > x and (best is None or s.x < best.x):
            best = s
    return best


def _feasible(v: float, accel: float, horizon: float, v_max: float, a_min: float, a_max: float):
    if not a_min <= accel <= a_max:
        return False
    v_end = v + accel * horizon
    return accel == 0 or 0.0 <= v_end <= v_max


def _preference(action: HostAction):
    # stay first, then gentler accelerations; remaining ties go left before
    # right and braking before speeding up
    return (action.lane_decision != 0, abs(action.long_accel), action.lane_decision,
            action.long_accel)


def stackelberg_rows(leader: Sequence[Sequence[float]], follower: Sequence[Sequence[float]]):
    """Solve a (possibly ragged) leader/follower cost table by pessimistic min-max.

    Returns ``(row, best_response_sets, worst_cases)``. Ties between rows go to
    the lowest index, so callers encode preference by row order.
    """
    best_sets, worst = [], []
    for lrow, frow in zip(leader, follower):
        if len(lrow) != len(frow) or not lrow:
            raise ValueError("leader and follower rows must be nonempty and equally long")
        m = min(frow)
        br = [j for j, c in enumerate(frow) if c == m]
        best_sets.append(br)
        worst.append(max(lrow[j] for j in br))
    if not worst:
        raise ValueError("empty game")
    row = 0
    for i in range(1, len(worst)):
        if worst[i] < worst[row]:
            row = i
    return row, best_sets, worst


def solve_matrix_game(leader_costs, follower_costs) -> tuple[int, int]:
    """(leader row, follower column) of a bimatrix Stackelberg game."""
    lead = np.asarray(leader_costs, dtype=float)
    foll = np.asarray(follower_costs, dtype=float)
    if lead.shape != foll.shape or lead.ndim != 2 or lead.size == 0:
        raise ValueError(f"cost tables must share a nonempty 2-D shape, got {lead.shape} and {foll.shape}")
    row, best_sets, _ = stackelberg_rows(lead.tolist(), foll.tolist())
    return row, best_sets[row][0]


def preferred_response(accels: Sequence[float]) -> float:
    return min(accels, key=lambda a: (abs(a), a))


def solve_stackelberg(snapshot: Snapshot, params: GameParams | None = None,
                      geometry: VehicleGeometry | None = None,
                      host_style: StyleProfile | Sequence[float] | None = None, *,
                      cost_fn: Callable[[HostAction, float | None], tuple[float, float]] | None = None,
                      ) -> DecisionOutcome:
    """Pick the host action minimizing its worst case over follower best responses.

    ``cost_fn(action, follower_accel) -> (host_total, follower_total)`` swaps
    the vehicle cost model for an arbitrary table; every host row then faces
    the full follower grid. Used to check the solver against brute force.
    """
    params = params or GameParams()
    geometry = geometry or VehicleGeometry()
    if host_style is None:
        host_style = StyleProfile.from_label(params.host_style)
    host_w = host_style.weights if isinstance(host_style, StyleProfile) else tuple(host_style)
    road, host = snapshot.road, snapshot.host
    tau, w, l_v = params.horizon, params.weights, geometry.safety_length
    lane = host.lane

    actions = []
    for alpha in (-1, 0, 1):
        target = lane + alpha
        if not 1 <= target <= road.lane_count:
            continue
        v_max = road.speed_limit(target)
        for a in params.host_accels:
            if _feasible(host.speed, a, tau, v_max, params.a_min, params.a_max):
                actions.append(HostAction(alpha, float(a)))
    if not actions:
        raise InfeasibleDecision("every host action violates the speed/acceleration bounds")
    actions.sort(key=_preference)

    # everyone except the follower coasts at constant speed over the horizon
    coasting = {v.name: predict(v.state, 0.0, tau, road.speed_limit(v.state.lane))
                for v in snapshot.others}
    by_name = {v.name: v for v in snapshot.others}

    leader_rows, follower_rows, row_meta = [], [], []
    for action in actions:
        target = lane + action.lane_decision
        p_host = predict(host, action.long_accel, tau, road.speed_limit(target))
        follower = None
        if cost_fn is not None or action.lane_decision != 0:
            follower = _follower_for(snapshot, target)
        if follower is None:
            zetas = [None]
        else:
            lim = road.speed_limit(follower.state.lane)
            zetas = [float(z) for z in params.follower_accels
                     if _feasible(follower.state.speed, z, tau, lim, params.a_min, params.a_max)]
            if not zetas:
                zetas = [0.0]
        lrow, frow, details = [], [], []
        for z in zetas:
            if cost_fn is not None:
                hc, fc = cost_fn(action, z)
                lrow.append(hc)
                frow.append(fc)
                details.append((None, None))
                continue
            world = dict(coasting)
            if follower is not None:
                world[follower.name] = predict(follower.state, z, tau,
                                               road.speed_limit(follower.state.lane))
            hb, fb = _score(road, p_host, world, by_name, action, follower, z, w, host_w, l_v,
                            params.lane_change_lat_accel)
            lrow.append(hb.total)
            frow.append(fb.total if fb is not None else 0.0)
            details.append((hb, fb))
        leader_rows.append(lrow)
        follower_rows.append(frow)
        row_meta.append((follower, zetas, details))

    row, best_sets, worst = stackelberg_rows(leader_rows, follower_rows)

    candidates = []
    for i, action in enumerate(actions):
        follower, zetas, _ = row_meta[i]
        br = tuple(zetas[j] for j in best_sets[i]) if follower is not None else ()
        candidates.append(Candidate(action, worst[i], follower.name if follower else None, br))

    follower, zetas, details = row_meta[row]
    responses, f_costs = {}, {}
    br_idx = best_sets[row]
    worst_j = max(br_idx, key=lambda j: leader_rows[row][j])
    hb = details[worst_j][0]
    if hb is None:
        hb = CostBreakdown(math.nan, math.nan, math.nan, leader_rows[row][worst_j])
    if follower is not None:
        chosen = preferred_response([zetas[j] for j in br_idx])
        responses[follower.name] = chosen
        fb = details[zetas.index(chosen)][1]
        if fb is None:
            fb = CostBreakdown(math.nan, math.nan, math.nan, follower_rows[row][zetas.index(chosen)])
        f_costs[follower.name] = fb
    return DecisionOutcome(actions[row], responses, hb, f_costs, tuple(candidates))


def intention_responses(outcome: DecisionOutcome) -> dict[str, float]:
    """How each adjacent-lane follower reacts to the host's cheapest move into its lane.

    The host's chosen action is one of these moves whenever it changes lane,
    so its follower's entry matches ``outcome.follower_responses``.
    """
    best: dict[int, Candidate] = {}
    for c in outcome.candidates:
        a = c.action.lane_decision
        if a == 0 or c.follower is None or not c.best_responses:
            continue
        if a not in best or c.worst_case < best[a].worst_case:
            best[a] = c
    return {c.follower: preferred_response(c.best_responses) for c in best.values()}


def _follower_for(snapshot: Snapshot, lane: int) -> Vehicle | None:
    """Reactive vehicle on ``lane`` closest to the host, if any."""
    x = snapshot.host.x
    pool = [v for v in snapshot.others if v.role == "obstacle" and v.state.lane == lane]
    if not pool:
        return None
    return min(pool, key=lambda v: (abs(v.state.x - x), v.name))


def _score(road, p_host, world, by_name, action, follower, zeta, w, host_w, l_v, lat_accel):
    lane = p_host.lane
    target = lane + action.lane_decision
    same = [s for n, s in world.items() if by_name[n].state.lane == lane]
    tgt = [s for n, s in world.items() if by_name[n].state.lane == target]
    ahead = nearest_ahead(p_host.x, same)
    target_ahead = nearest_ahead(p_host.x, tgt) if action.lane_decision else None
    if follower is not None and action.lane_decision:
        obstacle = world[follower.name]
    elif action.lane_decision and tgt:
        obstacle = min(tgt, key=lambda s: abs(s.x - p_host.x))
    else:
        obstacle = None
    hb = host_cost(p_host, ahead, obstacle, action, road, w, host_w, target_ahead=target_ahead,
                   safety_length=l_v, lat_accel=lat_accel)
    fb = None
    if follower is not None:
        f_state = world[follower.name]
        f_lane = [s for n, s in world.items()
                  if by_name[n].state.lane == follower.state.lane and n != follower.name]
        if action.lane_decision == 0 and p_host.lane == follower.state.lane:
            f_lane.append(p_host)
        f_ahead = nearest_ahead(f_state.x, f_lane)
        fb = obstacle_cost(f_state, f_ahead, p_host, action, zeta, road, w,
                           follower.style.weights, target_ahead=target_ahead, safety_length=l_v)
    return hb, fb


def follower_best_response(snapshot: Snapshot, host_action: HostAction, name: str,
                           params: GameParams | None = None,
                           geometry: VehicleGeometry | None = None) -> tuple[float, ...]:
    """Every follower acceleration attaining the minimal obstacle cost."""
    params = params or GameParams()
    geometry = geometry or VehicleGeometry()
    road, host, tau = snapshot.road, snapshot.host, params.horizon
    by_name = {v.name: v for v in snapshot.others}
    follower = by_name[name]
    target = host.lane + host_action.lane_decision
    p_host = predict(host, host_action.long_accel, tau, road.speed_limit(target))
    coasting = {v.name: predict(v.state, 0.0, tau, road.speed_limit(v.state.lane))
                for v in snapshot.others}
    lim = road.speed_limit(follower.state.lane)
    zetas = [float(z) for z in params.follower_accels
             if _feasible(follower.state.speed, z, tau, lim, params.a_min, params.a_max)] or [0.0]
    costs = []
    for z in zetas:
        world = dict(coasting)
        world[name] = predict(follower.state, z, tau, lim)
        _, fb = _score(road, p_host, world, by_name, host_action, follower, z, params.weights,
                       (1.0, 0.0, 0.0), geometry.safety_length, params.lane_change_lat_accel)
        costs.append(fb.total)
    m = min(costs)
    return tuple(z for z, c in zip(zetas, costs) if c == m)
