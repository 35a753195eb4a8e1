"""Road geometry, vehicle states, driving styles and scenario documents.

Frame: X runs along the road from its start, Y is lateral with the origin on
the road centerline and positive to the left. Lanes are numbered from the
left, so lane 1 is the leftmost lane and has the largest Y.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .params import Params, VehicleGeometry

STYLES = ("aggressive", "normal", "cautious")

# Safety / comfort / efficiency weights for each driving style.
STYLE_WEIGHTS = {
    "aggressive": (0.10, 0.10, 0.80),
    "normal": (0.50, 0.30, 0.20),
    "cautious": (0.70, 0.20, 0.10),
}

ROLES = ("ahead", "obstacle")
BUNDLED = ("case1", "case2", "case3")


class ScenarioError(ValueError):
    """A scenario document failed to parse or validate."""


class OverrideError(ScenarioError):
    """A ``key=value`` override names no known parameter or is malformed."""


class UnknownScenario(FileNotFoundError):
    """Neither a bundled scenario name nor an existing file."""


class LaneError(ValueError):
    pass


@dataclass(frozen=True)
class Road:
    lane_count: int = 2
    lane_width: float = 3.75
    length: float = 1000.0
    speed_limits: tuple[float, ...] = ()

    def __post_init__(self):
        if self.lane_count not in (2, 3):
            raise ScenarioError(f"road.lane_count must be 2 or 3, got {self.lane_count}")
        if self.lane_width <= 0:
            raise ScenarioError("road.lane_width must be > 0")
        if self.length <= 0:
            raise ScenarioError("road.length must be > 0")
        limits = tuple(float(v) for v in self.speed_limits) or (25.0,) * self.lane_count
        if len(limits) != self.lane_count:
            raise ScenarioError("road.speed_limits needs one entry per lane")
        if min(limits) <= 0:
            raise ScenarioError("road.speed_limits must be > 0")
        object.__setattr__(self, "speed_limits", limits)

    @property
    def half_width(self) -> float:
        return 0.5 * self.lane_count * self.lane_width

    def lane_center(self, lane: int) -> float:
        if not 1 <= lane <= self.lane_count:
            raise LaneError(f"lane {lane} outside 1..{self.lane_count}")
        return ((self.lane_count + 1) / 2.0 - lane) * self.lane_width

    def lane_of(self, y: float) -> int:
        """Lane whose centerline is nearest to ``y``.

        A point exactly on a lane mark belongs to the lower-index lane.
        """
        if abs(y) > self.half_width:
            raise LaneError(f"y={y} is off the road (|y| > {self.half_width})")
        # distance from the left edge, in lane widths
        s = (self.half_width - y) / self.lane_width
        lane = int(s) + 1
        if s == int(s) and lane > 1:
            lane -= 1
        return min(max(lane, 1), self.lane_count)

    def speed_limit(self, lane: int) -> float:
        if not 1 <= lane <= self.lane_count:
            raise LaneError(f"lane {lane} outside 1..{self.lane_count}")
        return self.speed_limits[lane - 1]

    def lane_marks(self) -> list[tuple[float, str]]:
        """Lateral positions of every lane line, left to right, tagged edge/divider."""
        marks = []
        for i in range(self.lane_count + 1):
            y = self.half_width - i * self.lane_width
            kind = "edge" if i in (0, self.lane_count) else "divider"
            marks.append((y, kind))
        return marks


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    speed: float
    heading: float = 0.0
    lane: int = 1
    long_accel: float = 0.0
    lat_accel: float = 0.0

    def replace(self, **changes) -> "VehicleState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StyleProfile:
    label: str
    w_safety: float
    w_comfort: float
    w_efficiency: float
    field_reach_multiplier: float = 1.0

    def __post_init__(self):
        if self.label not in STYLES:
            raise ScenarioError(f"unknown driving style {self.label!r}")
        if abs(self.w_safety + self.w_comfort + self.w_efficiency - 1.0) > 1e-9:
            raise ScenarioError("style weights must sum to 1")
        if self.field_reach_multiplier <= 0:
            raise ScenarioError("field_reach_multiplier must be > 0")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_safety, self.w_comfort, self.w_efficiency)

    @classmethod
    def from_label(cls, label: str, params: Params | None = None) -> "StyleProfile":
        fp = (params or Params()).field
        reach = {
            "aggressive": fp.reach_aggressive,
            "normal": fp.reach_normal,
            "cautious": fp.reach_cautious,
        }
        return cls(label, *style_weights(label), field_reach_multiplier=reach[label])


def style_weights(label: str) -> tuple[float, float, float]:
    """(safety, comfort, efficiency) weights of a driving style."""
    try:
        return STYLE_WEIGHTS[label]
    except KeyError:
        raise ScenarioError(f"unknown driving style {label!r}") from None


@dataclass(frozen=True)
class Vehicle:
    """A non-host traffic participant."""

    name: str
    state: VehicleState
    style: StyleProfile
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ScenarioError(f"vehicle {self.name}: role must be one of {ROLES}")


@dataclass(frozen=True)
class Scenario:
    name: str
    road: Road
    host: VehicleState
    others: tuple[Vehicle, ...]
    duration: float
    sample_time: float = 0.1
    decision_period: float = 0.5
    params: Params = field(default_factory=Params)
    description: str = ""

    @property
    def geometry(self) -> VehicleGeometry:
        return self.params.geometry

    @property
    def host_style(self) -> StyleProfile:
        return StyleProfile.from_label(self.params.game.host_style, self.params)

    @property
    def decision_steps(self) -> int:
        return round(self.decision_period / self.sample_time)

    @property
    def steps(self) -> int:
        return round(self.duration / self.sample_time)

    def vehicle(self, name: str) -> Vehicle:
        for v in self.others:
            if v.name == name:
                return v
        raise KeyError(name)

    def with_styles(self, styles: dict[str, str]) -> "Scenario":
        others = []
        for v in self.others:
            if v.name in styles:
                v = dataclasses.replace(v, style=StyleProfile.from_label(styles[v.name], self.params))
            others.append(v)
        unknown = set(styles) - {v.name for v in self.others}
        if unknown:
            raise ScenarioError(f"no vehicle named {sorted(unknown)}")
        return dataclasses.replace(self, others=tuple(others))

    def validate(self) -> None:
        road = self.road
        if self.duration <= 0:
            raise ScenarioError("timing.duration must be > 0")
        if self.sample_time <= 0:
            raise ScenarioError("timing.sample_time must be > 0")
        k = self.decision_period / self.sample_time
        if self.decision_period <= 0 or abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ScenarioError("timing.decision_period must be a positive multiple of sample_time")
        if abs(self.params.planner.sample_time - self.sample_time) > 1e-12:
            raise ScenarioError("params.planner.sample_time must equal timing.sample_time")
        everyone = [("host", self.host)] + [(v.name, v.state) for v in self.others]
        for name, s in everyone:
            if not 1 <= s.lane <= road.lane_count:
                raise ScenarioError(f"{name}: lane {s.lane} outside 1..{road.lane_count}")
            if not 0 <= s.speed <= road.speed_limit(s.lane):
                raise ScenarioError(f"{name}: speed {s.speed} outside [0, lane limit]")
        names = [n for n, _ in everyone]
        if len(set(names)) != len(names):
            raise ScenarioError("vehicle names must be unique")
        l_v = self.geometry.safety_length
        for i, (n1, s1) in enumerate(everyone):
            for n2, s2 in everyone[i + 1:]:
                if s1.lane == s2.lane and abs(s1.x - s2.x) <= l_v:
                    raise ScenarioError(f"{n1} and {n2} overlap in lane {s1.lane}")


# -- documents ---------------------------------------------------------------

def _vehicle_state(doc: dict, road: Road, where: str) -> VehicleState:
    known = {"name", "role", "style", "x", "y", "lane", "speed", "heading"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    for key in ("x", "lane", "speed"):
        if key not in doc:
            raise ScenarioError(f"{where}.{key}: required field missing")
    lane = doc["lane"]
    if isinstance(lane, bool) or not isinstance(lane, int):
        raise ScenarioError(f"{where}.lane: expected an integer")
    if not 1 <= lane <= road.lane_count:
        raise ScenarioError(f"{where}.lane: {lane} outside 1..{road.lane_count}")
    try:
        x = float(doc["x"])
        speed = float(doc["speed"])
        y = float(doc["y"]) if "y" in doc else road.lane_center(lane)
        heading = float(doc.get("heading", 0.0))
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: x/y/speed/heading must be numbers") from None
    return VehicleState(x=x, y=y, speed=speed, heading=heading, lane=lane)


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a parsed scenario document and build the ``Scenario``."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    known = {"name", "description", "road", "host", "vehicles", "timing", "params"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown top-level field(s) {sorted(unknown)}")
    for key in ("road", "host", "timing"):
        if key not in doc:
            raise ScenarioError(f"{key}: required block missing")
    try:
        params = Params.from_dict(doc.get("params"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(exc.args[0] if exc.args else str(exc)) from None

    rd = doc["road"]
    if not isinstance(rd, dict):
        raise ScenarioError("road: expected a mapping")
    unknown = set(rd) - {"lane_count", "lane_width", "length", "speed_limits"}
    if unknown:
        raise ScenarioError(f"road: unknown field(s) {sorted(unknown)}")
    lane_count = rd.get("lane_count", 2)
    if isinstance(lane_count, bool) or not isinstance(lane_count, int):
        raise ScenarioError("road.lane_count: expected an integer")
    road = Road(
        lane_count=lane_count,
        lane_width=float(rd.get("lane_width", 3.75)),
        length=float(rd.get("length", 1000.0)),
        speed_limits=tuple(rd.get("speed_limits", ())),
    )

    hd = doc["host"]
    if not isinstance(hd, dict):
        raise ScenarioError("host: expected a mapping")
    host = _vehicle_state({k: v for k, v in hd.items() if k != "name"}, road, "host")

    others = []
    for i, vd in enumerate(doc.get("vehicles") or []):
        where = f"vehicles[{i}]"
        if not isinstance(vd, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        name = str(vd.get("name", f"V{i + 1}"))
        role = vd.get("role", "obstacle")
        if role not in ROLES:
            raise ScenarioError(f"{where}.role: must be one of {ROLES}, got {role!r}")
        label = vd.get("style", "normal")
        if label not in STYLES:
            raise ScenarioError(f"{where}.style: must be one of {STYLES}, got {label!r}")
        state = _vehicle_state(vd, road, where)
        others.append(Vehicle(name, state, StyleProfile.from_label(label, params), role))

    td = doc["timing"]
    if not isinstance(td, dict):
        raise ScenarioError("timing: expected a mapping")
    unknown = set(td) - {"duration", "sample_time", "decision_period"}
    if unknown:
        raise ScenarioError(f"timing: unknown field(s) {sorted(unknown)}")
    if "duration" not in td:
        raise ScenarioError("timing.duration: required field missing")
    sample_time = float(td.get("sample_time", params.planner.sample_time))
    planner_doc = (doc.get("params") or {}).get("planner") or {}
    if "sample_time" in planner_doc and float(planner_doc["sample_time"]) != sample_time:
        raise ScenarioError("params.planner.sample_time must equal timing.sample_time")
    params = dataclasses.replace(
        params, planner=dataclasses.replace(params.planner, sample_time=sample_time)
    )
    sc = Scenario(
        name=str(doc.get("name", "scenario")),
        road=road,
        host=host,
        others=tuple(others),
        duration=float(td["duration"]),
        sample_time=sample_time,
        decision_period=float(td.get("decision_period", 0.5)),
        params=params,
        description=str(doc.get("description", "")),
    )
    sc.validate()
    return sc


def scenario_to_dict(sc: Scenario) -> dict:
    def vehicle_doc(s: VehicleState) -> dict:
        return {"x": s.x, "y": s.y, "lane": s.lane, "speed": s.speed, "heading": s.heading}

    vehicles = []
    for v in sc.others:
        d = {"name": v.name, "role": v.role, "style": v.style.label}
        d.update(vehicle_doc(v.state))
        vehicles.append(d)
    return {
        "name": sc.name,
        "description": sc.description,
        "road": {
            "lane_count": sc.road.lane_count,
            "lane_width": sc.road.lane_width,
            "length": sc.road.length,
            "speed_limits": list(sc.road.speed_limits),
        },
        "host": vehicle_doc(sc.host),
        "vehicles": vehicles,
        "timing": {
            "duration": sc.duration,
            "sample_time": sc.sample_time,
            "decision_period": sc.decision_period,
        },
        "params": sc.params.to_dict(),
    }


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


def apply_overrides(doc: dict, overrides: list[str] | dict) -> dict:
    """Apply dotted-path ``key=value`` overrides to a parsed document.

    Parameter groups (``game``, ``field``, ``planner``, ``loop``, ``geometry``)
    may be given with or without the ``params.`` prefix. Vehicles are
    addressed by name: ``vehicles.V2.style=cautious``. Keys must name an
    existing parameter; values are parsed as YAML scalars.
    """
    doc = copy.deepcopy(doc)
    defaults = {"params": Params().to_dict()}
    items = overrides.items() if isinstance(overrides, dict) else [_split(o) for o in overrides]
    for key, value in items:
        if isinstance(value, str):
            value = yaml.safe_load(value) if value != "" else ""
        parts = key.split(".")
        if parts[0] in defaults["params"]:
            parts = ["params"] + parts
        if parts[0] == "vehicles":
            _set_vehicle(doc, parts[1:], value, key)
            continue
        if parts[0] == "params":
            node = defaults
            for p in parts:
                if not isinstance(node, dict) or p not in node:
                    raise OverrideError(f"override {key!r}: unknown parameter")
                node = node[p]
        elif parts[0] in ("road", "timing", "host"):
            allowed = {
                "road": {"lane_count", "lane_width", "length", "speed_limits"},
                "timing": {"duration", "sample_time", "decision_period"},
                "host": {"x", "y", "lane", "speed", "heading"},
            }[parts[0]]
            if len(parts) != 2 or parts[1] not in allowed:
                raise OverrideError(f"override {key!r}: unknown parameter")
        elif parts == ["name"] or parts == ["description"]:
            pass
        else:
            raise OverrideError(f"override {key!r}: unknown parameter")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise OverrideError(f"override {key!r}: {p} is not a mapping")
        node[parts[-1]] = value
    return doc


def _split(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise OverrideError(f"override {item!r}: expected key=value")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def _set_vehicle(doc, parts, value, key):
    if len(parts) != 2:
        raise OverrideError(f"override {key!r}: expected vehicles.<name>.<field>")
    name, attr = parts
    if attr not in {"role", "style", "x", "y", "lane", "speed", "heading"}:
        raise OverrideError(f"override {key!r}: unknown vehicle field")
    for i, vd in enumerate(doc.get("vehicles") or []):
        if str(vd.get("name", f"V{i + 1}")) == name:
            vd[attr] = value
            return
    raise OverrideError(f"override {key!r}: no vehicle named {name}")


def read_document(ref: str | Path) -> dict:
    """Parse a bundled scenario name or a path to a YAML document."""
    ref = str(ref)
    if ref in BUNDLED:
        text = resources.files("lanegame").joinpath("scenarios").joinpath(f"{ref}.yaml").read_text()
    else:
        path = Path(ref)
        if not path.is_file():
            raise UnknownScenario(f"unknown scenario {ref!r}")
        text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from None
    return doc


def load_scenario(ref: str | Path | dict, overrides=None) -> Scenario:
    doc = ref if isinstance(ref, dict) else read_document(ref)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return scenario_from_dict(doc)
