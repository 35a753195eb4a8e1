"""Tunable parameter bundles shared by every layer.

All bundles are frozen dataclasses so a resolved parameter set can be shared
between concurrent runs. ``Params.from_dict`` / ``Params.to_dict`` give the
nested-dict form used by scenario documents and ``--set`` overrides.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field


@dataclass(frozen=True)
class VehicleGeometry:
    safety_length: float = 5.0  # l_v, bumper-to-bumper allowance
    width: float = 1.8

    def __post_init__(self):
        if self.safety_length <= 0 or self.width <= 0:
            raise ValueError("vehicle geometry must be strictly positive")


@dataclass(frozen=True)
class CostWeights:
    """Inner coefficients of the safety/comfort terms of the decision costs."""

    k_v_log: float = 4.0
    k_s_log: float = 18500.0
    k_v_lat: float = 0.4
    k_s_lat: float = 19500.0
    k_ax: float = 8.4
    k_ay: float = 0.8
    nu: float = 1e-3

    def __post_init__(self):
        for name in ("k_v_log", "k_s_log", "k_v_lat", "k_s_lat", "k_ax", "k_ay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")


@dataclass(frozen=True)
class GameParams:
    host_accels: tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0)
    follower_accels: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    a_min: float = -4.0
    a_max: float = 3.0
    # Look-ahead over which the action pair is held before costs are scored.
    horizon: float = 1.0
    # Nominal lateral acceleration charged to a lane change in the comfort term.
    lane_change_lat_accel: float = 1.0
    weights: CostWeights = field(default_factory=CostWeights)
    # Host outer weights (safety, comfort, efficiency); "normal" column by default.
    host_style: str = "normal"

    def __post_init__(self):
        if not self.host_accels or not self.follower_accels:
            raise ValueError("action grids must be nonempty")
        if self.a_min > self.a_max:
            raise ValueError("a_min must not exceed a_max")
        if self.horizon <= 0:
            raise ValueError("game horizon must be > 0")


@dataclass(frozen=True)
class ObstacleFieldParams:
    amplitude: float = 10.0
    sigma_x: float = 8.0
    sigma_y: float = 1.2
    shape: float = 1.0
    velocity_gain: float = 0.05

    def __post_init__(self):
        for name in ("amplitude", "sigma_x", "sigma_y", "shape"):
            if getattr(self, name) <= 0:
                raise ValueError(f"obstacle field {name} must be > 0")


@dataclass(frozen=True)
class RoadFieldParams:
    amplitude: float = 2.0
    safety_margin: float = 0.2
    vehicle_width: float = 1.8

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("road field amplitude must be > 0")
        if self.safety_margin < 0:
            raise ValueError("road field safety_margin must be >= 0")


@dataclass(frozen=True)
class FieldParams:
    obstacle: ObstacleFieldParams = field(default_factory=ObstacleFieldParams)
    edge: RoadFieldParams = field(default_factory=RoadFieldParams)
    divider: RoadFieldParams = field(default_factory=RoadFieldParams)
    reach_aggressive: float = 1.5
    reach_normal: float = 1.0
    reach_cautious: float = 0.6
    scale_sigma_y: bool = False


@dataclass(frozen=True)
class PlannerParams:
    prediction_horizon: int = 15
    control_horizon: int = 3
    sample_time: float = 0.1
    q_field: float = 1.0
    q_lane: float = 2.0
    r_control: float = 0.1
    u_min: float = -3.0
    u_max: float = 3.0
    candidates: tuple[float, ...] = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
    speed_floor: float = 0.5
    integrator: str = "rk4"

    def __post_init__(self):
        if not self.prediction_horizon > self.control_horizon >= 1:
            raise ValueError("need prediction_horizon > control_horizon >= 1")
        if self.sample_time <= 0:
            raise ValueError("sample_time must be > 0")
        if min(self.q_field, self.q_lane, self.r_control) < 0:
            raise ValueError("planner weights must be >= 0")
        if self.u_min > self.u_max:
            raise ValueError("u_min must not exceed u_max")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass(frozen=True)
class LoopConfig:
    lane_change_epsilon: float = 0.2
    heading_tolerance: float = 0.02
    obstacle_mode: str = "game-response"

    def __post_init__(self):
        if self.lane_change_epsilon <= 0:
            raise ValueError("lane_change_epsilon must be > 0")
        if self.obstacle_mode not in ("game-response", "constant-speed"):
            raise ValueError(f"unknown obstacle_mode {self.obstacle_mode!r}")


@dataclass(frozen=True)
class Params:
    geometry: VehicleGeometry = dataclasses.field(default_factory=VehicleGeometry)
    game: GameParams = dataclasses.field(default_factory=GameParams)
    field: FieldParams = dataclasses.field(default_factory=FieldParams)
    planner: PlannerParams = dataclasses.field(default_factory=PlannerParams)
    loop: LoopConfig = dataclasses.field(default_factory=LoopConfig)

    def to_dict(self) -> dict:
        return to_plain(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "Params":
        return build(cls, data or {}, "params")


def to_plain(obj):
    """Dataclass tree -> nested dicts/lists of plain scalars."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_plain(v) for v in obj]
    return obj


def build(cls, data, where: str):
    """Construct dataclass ``cls`` from a (partial) nested dict.

    Unknown keys raise ``KeyError`` naming the dotted path; missing keys keep
    their defaults.
    """
    if not isinstance(data, dict):
        raise TypeError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise KeyError(f"{where}: unknown parameter(s) {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(hints[key], value, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None


def _coerce(hint, value, where):
    if dataclasses.is_dataclass(hint):
        return build(hint, value, where)
    origin = typing.get_origin(hint)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise TypeError(f"{where}: expected a list")
        return tuple(float(v) for v in value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise TypeError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise TypeError(f"{where}: expected a string, got {value!r}")
        return value
    return value
