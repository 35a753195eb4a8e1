"""Closed-loop integration of the decision game and the motion planner."""
from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .field import build_scene
from .game import (
    CostBreakdown,
    DecisionOutcome,
    HostAction,
    InfeasibleDecision,
    Snapshot,
    follower_best_response,
    intention_responses,
    nearest_ahead,
    predict,
    preferred_response,
    solve_stackelberg,
)
from .params import LoopConfig
from .planner import solve_mpc, step
from .world import LaneError, Scenario, Vehicle, VehicleState

HOST = "host"


@dataclass(frozen=True)
class StepRecord:
    t: float
    states: dict[str, VehicleState]
    decision: DecisionOutcome
    target_lane: int
    host_accel: float
    control: float
    plan_control: float
    plan_cost: float
    accels: dict[str, float]
    min_gap: float


@dataclass
class SimLog:
    scenario: str
    names: tuple[str, ...]
    styles: dict[str, str]
    sample_time: float
    safety_length: float
    lane_centers: tuple[float, ...]
    records: list[StepRecord] = field(default_factory=list)
    collision: bool = False
    infeasible: bool = False
    stop_reason: str = ""
    truncated_at: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str, attr: str) -> np.ndarray:
        return np.array([getattr(r.states[name], attr) for r in self.records])

    def to_table(self) -> str:
        return log_table(self)

    def summary(self) -> dict:
        return log_summary(self)


def _gap_pairs(states: dict[str, VehicleState], l_v: float):
    names = sorted(states)
    out = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sa, sb = states[a], states[b]
            if sa.lane == sb.lane:
                out[(a, b)] = abs(sa.x - sb.x) - l_v
    return out


def _min_gap(states, l_v) -> float:
    gaps = _gap_pairs(states, l_v)
    return min(gaps.values()) if gaps else math.inf


def _obstacle_accels(snap: Snapshot, decision: DecisionOutcome, params) -> dict[str, float]:
    """Accelerations every non-host vehicle holds until the next decision tick.

    Adjacent-lane followers not already a safety length ahead of the host react
    to the host's cheapest move into their lane. Other reactive vehicles with someone ahead on their lane (the host
    included) play their car-following best response; everyone else cruises.
    """
    accels = {v.name: 0.0 for v in snap.others}
    by_name = {v.name: v for v in snap.others}
    reach = snap.host.x + params.geometry.safety_length
    reacting = {n: a for n, a in intention_responses(decision).items()
                if by_name[n].state.x <= reach}
    accels.update(reacting)
    keep = HostAction(0, 0.0)
    for v in snap.others:
        if v.role != "obstacle" or v.name in reacting:
            continue
        lane_mates = [o.state for o in snap.others if o.name != v.name and o.state.lane == v.state.lane]
        if snap.host.lane == v.state.lane:
            lane_mates.append(snap.host)
        if nearest_ahead(v.state.x, lane_mates) is None:
            continue
        accels[v.name] = preferred_response(
            follower_best_response(snap, keep, v.name, params.game, params.geometry))
    return accels


def simulate(scenario: Scenario, config: LoopConfig | None = None) -> SimLog:
    """Run the scenario to its duration, or until a collision / infeasible decision."""
    params = scenario.params
    if config is not None:
        params = dataclasses.replace(params, loop=config)
    config = params.loop
    road, dt = scenario.road, scenario.sample_time
    l_v = params.geometry.safety_length
    host_style = scenario.host_style
    styles = {v.name: v.style for v in scenario.others}
    roles = {v.name: v.role for v in scenario.others}
    log = SimLog(
        scenario=scenario.name,
        names=(HOST,) + tuple(v.name for v in scenario.others),
        styles={n: s.label for n, s in styles.items()},
        sample_time=dt,
        safety_length=l_v,
        lane_centers=tuple(road.lane_center(k) for k in range(1, road.lane_count + 1)),
    )
    host = scenario.host
    others = {v.name: v.state for v in scenario.others}
    decision = None
    target_lane = host.lane
    host_accel = 0.0
    accels = {n: 0.0 for n in others}

    for k in range(scenario.steps):
        t = k * dt
        if k % scenario.decision_steps == 0:
            snap = Snapshot(road, host, tuple(
                Vehicle(n, s, styles[n], roles[n]) for n, s in others.items()))
            try:
                decision = solve_stackelberg(snap, params.game, params.geometry, host_style)
            except InfeasibleDecision:
                log.infeasible = True
                log.stop_reason = "infeasible decision"
                log.truncated_at = t
                break
            target_lane = host.lane + decision.host_action.lane_decision
            host_accel = decision.host_action.long_accel
            accels = _obstacle_accels(snap, decision, params) \
                if config.obstacle_mode == "game-response" else {n: 0.0 for n in others}

        movers = [(s, styles[n]) for n, s in others.items()]
        scene = build_scene(road, movers, params.field, params.geometry.width)
        plan = solve_mpc(host, host_accel, scene, road.lane_center(target_lane), params.planner,
                         v_max=road.speed_limit(host.lane))
        u = plan.first_control if host.speed >= params.planner.speed_floor else 0.0
        states = {HOST: host, **others}
        log.records.append(StepRecord(
            t=t, states=states, decision=decision, target_lane=target_lane,
            host_accel=host_accel, control=u, plan_control=plan.first_control,
            plan_cost=plan.cost, accels=dict(accels), min_gap=_min_gap(states, l_v),
        ))
        if log.records[-1].min_gap < 0:
            log.collision = True
            log.stop_reason = "collision"
            log.truncated_at = t
            break

        g = params.game
        new_host = step(host, u, host_accel, dt, v_max=road.speed_limit(host.lane),
                        a_bounds=(g.a_min, g.a_max),
                        u_bounds=(params.planner.u_min, params.planner.u_max),
                        speed_floor=params.planner.speed_floor, method=params.planner.integrator)
        try:
            host = new_host.replace(lane=road.lane_of(new_host.y))
        except LaneError:
            log.collision = True
            log.stop_reason = "host left the road"
            log.truncated_at = t + dt
            break
        others = {n: predict(s, accels[n], dt, road.speed_limit(s.lane)) for n, s in others.items()}
    if not log.stop_reason:
        log.stop_reason = "duration reached"
    return log


# -- metrics ------------------------------------------------------------------

def lane_change_onset(log: SimLog, direction: int | None = None) -> float | None:
    """Time of the first decision with a nonzero lane decision (optionally a given sign)."""
    for r in log.records:
        a = r.decision.host_action.lane_decision
        if a != 0 and (direction is None or a == direction):
            return r.t
    return None


def lane_changes(log: SimLog, epsilon: float = 0.2, heading_tol: float = 0.02):
    """Completed lane changes as (time, x, from_lane, to_lane).

    A change completes when the host first settles (within ``epsilon`` of a
    centerline, heading within ``heading_tol``) in a lane other than the one
    it last settled in.
    """
    out = []
    settled = None
    for r in log.records:
        h = r.states[HOST]
        if abs(h.heading) > heading_tol:
            continue
        for lane, c in enumerate(log.lane_centers, start=1):
            if abs(h.y - c) < epsilon:
                if settled is not None and lane != settled:
                    out.append((r.t, h.x, settled, lane))
                settled = lane
                break
    return out


def lane_change_complete(log: SimLog, epsilon: float = 0.2, nth: int = 1,
                         heading_tol: float = 0.02) -> tuple[bool, float | None]:
    """Whether the ``nth`` lane change after a lane-change decision completed, and where."""
    if lane_change_onset(log) is None:
        return False, None
    changes = lane_changes(log, epsilon, heading_tol)
    if len(changes) < nth:
        return False, None
    return True, changes[nth - 1][1]


def gap_metrics(log: SimLog) -> tuple[float, dict[tuple[str, str], np.ndarray]]:
    """Minimum same-lane net gap over the run and the per-pair gap series (nan = other lane)."""
    pairs: dict[tuple[str, str], np.ndarray] = {}
    names = sorted(log.names)
    n = len(log.records)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            pairs[(a, b)] = np.full(n, np.nan)
    for k, r in enumerate(log.records):
        for key, g in _gap_pairs(r.states, log.safety_length).items():
            pairs[key][k] = g
    finite = [np.nanmin(s) for s in pairs.values() if np.any(~np.isnan(s))]
    return (min(finite) if finite else math.inf), pairs


def final_gap_ahead(log: SimLog) -> float | None:
    """Net gap from the host to the nearest vehicle ahead on its lane at the last step."""
    r = log.records[-1]
    h = r.states[HOST]
    ahead = [s.x - h.x for n, s in r.states.items()
             if n != HOST and s.lane == h.lane and s.x > h.x]
    return min(ahead) - log.safety_length if ahead else None


# -- serialization ------------------------------------------------------------

_VEHICLE_COLS = ("x", "y", "speed", "heading", "lane", "long_accel")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


def table_columns(log: SimLog) -> list[tuple[str, str]]:
    cols = [
        ("t", "time [s]"),
        ("alpha", "active lane decision: -1 left, 0 stay, 1 right"),
        ("decision", "decision label"),
        ("target_lane", "lane the planner is steering to (1 = leftmost)"),
        ("host_accel", "host longitudinal acceleration from the game [m/s^2]"),
        ("u", "applied lateral acceleration = first planned control [m/s^2]"),
        ("plan_cost", "planner cost of the chosen sequence"),
        ("host_cost", "host worst-case decision cost (total)"),
        ("host_safety", "host safety cost"),
        ("host_comfort", "host comfort cost"),
        ("host_efficiency", "host efficiency cost"),
        ("min_gap", "minimum same-lane net gap over all vehicle pairs [m]"),
    ]
    for n in log.names:
        for c in _VEHICLE_COLS:
            cols.append((f"{n}.{c}", f"{n} {c}"))
        if n != HOST:
            cols.append((f"{n}.cost", f"{n} follower cost when responding (blank otherwise)"))
    return cols


def log_table(log: SimLog) -> str:
    cols = table_columns(log)
    buf = io.StringIO()
    buf.write(f"# scenario: {log.scenario}\n")
    buf.write("# styles: " + ", ".join(f"{k}={v}" for k, v in sorted(log.styles.items())) + "\n")
    for name, desc in cols:
        buf.write(f"# {name}: {desc}\n")
    buf.write("\t".join(c for c, _ in cols) + "\n")
    for r in log.records:
        hc = r.decision.host_cost
        row = [r.t, r.decision.host_action.lane_decision, r.decision.label, r.target_lane,
               r.host_accel, r.control, r.plan_cost, hc.total, hc.safety, hc.comfort,
               hc.efficiency, r.min_gap]
        for n in log.names:
            s = r.states[n]
            row.extend(getattr(s, c) for c in _VEHICLE_COLS)
            if n != HOST:
                fc = r.decision.follower_costs.get(n)
                row.append(fc.total if fc is not None else None)
        buf.write("\t".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def read_table(text: str) -> tuple[list[str], np.ndarray]:
    """Parse a log table back into (column names, numeric array; labels become nan)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split("\t")
    rows = []
    for ln in lines[1:]:
        vals = []
        for v in ln.split("\t"):
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(math.nan)
        rows.append(vals)
    return header, np.array(rows)


def log_summary(log: SimLog, epsilon: float = 0.2) -> dict:
    decisions = []
    prev = None
    for r in log.records:
        key = (r.decision.label, r.host_accel)
        if key != prev:
            decisions.append({"t": round(r.t, 9), "decision": r.decision.label,
                              "host_accel": r.host_accel,
                              "responses": dict(r.decision.follower_responses)})
            prev = key
    min_gap, _ = gap_metrics(log)
    changes = lane_changes(log, epsilon)
    first_label = next((r.decision.label for r in log.records
                        if r.decision.host_action.lane_decision != 0), "stay")
    fg = final_gap_ahead(log)
    return {
        "scenario": log.scenario,
        "styles": dict(sorted(log.styles.items())),
        "steps": len(log.records),
        "duration": round(len(log.records) * log.sample_time, 9),
        "first_decision": first_label,
        "lane_change_onset": lane_change_onset(log),
        "lane_changes": [{"t": round(t, 9), "x": x, "from": a, "to": b} for t, x, a, b in changes],
        "min_gap": None if math.isinf(min_gap) else min_gap,
        "final_gap_ahead": fg,
        "collision": log.collision,
        "infeasible": log.infeasible,
        "stop_reason": log.stop_reason,
        "decisions": decisions,
    }


def cost_breakdown_dict(c: CostBreakdown) -> dict:
    return dataclasses.asdict(c)
