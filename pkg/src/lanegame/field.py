"""Obstacle, road and combined potential fields, plus grid sampling/export."""
from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import FieldParams, ObstacleFieldParams, RoadFieldParams
from .world import Road, StyleProfile, VehicleState


def obstacle_potential(params: ObstacleFieldParams, ov: VehicleState, x, y):
    """Exponential lobe around an obstacle, stretched ahead in proportion to its speed.

    Accepts scalars or numpy arrays for ``x``/``y``. At the vehicle center
    the heading-asymmetry term is taken as 0, so the value there is the
    amplitude.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - ov.x
    dx2 = dx * dx / (2.0 * params.sigma_x ** 2)
    dy2 = (y - ov.y) ** 2 / (2.0 * params.sigma_y ** 2)
    r = dx2 + dy2
    k = np.where(dx < 0, -1.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        xi = np.where(r > 0, k * dx2 / np.sqrt(r), 0.0)
    eta = -(r ** params.shape) + params.velocity_gain * ov.speed * xi
    out = params.amplitude * np.exp(eta)
    return out if out.ndim else float(out)


def road_potential(params: RoadFieldParams, d):
    """Wall field of a lane mark at distance ``d`` (>= 0) from it."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance to the lane mark must be >= 0")
    out = params.amplitude * np.exp((params.safety_margin + 0.5 * params.vehicle_width) - d)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LaneLine:
    y: float
    params: RoadFieldParams
    kind: str = "edge"


@dataclass(frozen=True)
class FieldScene:
    obstacles: tuple[tuple[VehicleState, ObstacleFieldParams], ...] = ()
    lines: tuple[LaneLine, ...] = ()

    def __add__(self, other: "FieldScene") -> "FieldScene":
        return FieldScene(self.obstacles + other.obstacles, self.lines + other.lines)

    def advanced(self, dt: float) -> "FieldScene":
        """Scene with every obstacle moved ``dt`` seconds at constant speed."""
        if dt == 0 or not self.obstacles:
            return self
        moved = tuple((s.replace(x=s.x + s.speed * np.cos(s.heading) * dt), p)
                      for s, p in self.obstacles)
        return FieldScene(moved, self.lines)


def total_potential(scene: FieldScene, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = np.zeros(np.broadcast(x, y).shape)
    for state, p in scene.obstacles:
        total = total + obstacle_potential(p, state, x, y)
    for line in scene.lines:
        total = total + road_potential(line.params, np.abs(y - line.y))
    return total if total.ndim else float(total)


def style_field_params(base: ObstacleFieldParams, style: StyleProfile,
                       scale_sigma_y: bool = False) -> ObstacleFieldParams:
    m = style.field_reach_multiplier
    changes = {"sigma_x": base.sigma_x * m}
    if scale_sigma_y:
        changes["sigma_y"] = base.sigma_y * m
    return dataclasses.replace(base, **changes)


def road_lines(road: Road, params: FieldParams, vehicle_width: float | None = None):
    lines = []
    for y, kind in road.lane_marks():
        p = params.edge if kind == "edge" else params.divider
        if vehicle_width is not None:
            p = dataclasses.replace(p, vehicle_width=vehicle_width)
        lines.append(LaneLine(y, p, kind))
    return tuple(lines)


def build_scene(road: Road, vehicles: Sequence[tuple[VehicleState, StyleProfile]],
                params: FieldParams | None = None, vehicle_width: float | None = None) -> FieldScene:
    """Scene of style-shaped obstacle lobes plus every lane line of ``road``."""
    params = params or FieldParams()
    obstacles = tuple(
        (s, style_field_params(params.obstacle, style, params.scale_sigma_y))
        for s, style in vehicles
    )
    return FieldScene(obstacles, road_lines(road, params, vehicle_width))


@dataclass(frozen=True)
class Grid:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(ys), len(xs)), row-major over y

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# potential grid nx={len(self.xs)} ny={len(self.ys)} "
            f"x0={float(self.xs[0])!r} x1={float(self.xs[-1])!r} "
            f"y0={float(self.ys[0])!r} y1={float(self.ys[-1])!r} "
            f"dx={_step(self.xs)!r} dy={_step(self.ys)!r}\n"
        )
        buf.write("# rows: y ascending; columns: x ascending\n")
        np.savetxt(buf, self.values, fmt="%.17g", delimiter=" ")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Grid":
        header = text.splitlines()[0]
        meta = dict(tok.split("=") for tok in header.split()[3:])
        nx, ny = int(meta["nx"]), int(meta["ny"])
        xs = np.linspace(float(meta["x0"]), float(meta["x1"]), nx)
        ys = np.linspace(float(meta["y0"]), float(meta["y1"]), ny)
        values = np.loadtxt(io.StringIO(text), comments="#", ndmin=2).reshape(ny, nx)
        return cls(xs, ys, values)


def _step(axis) -> float:
    return float(axis[1] - axis[0]) if len(axis) > 1 else 0.0


def sample_grid(scene: FieldScene, x_range: tuple[float, float], y_range: tuple[float, float],
                resolution: float | tuple[float, float]) -> Grid:
    """Evaluate the combined field on a regular grid including both range ends."""
    if np.isscalar(resolution):
        rx = ry = float(resolution)
    else:
        rx, ry = (float(r) for r in resolution)
    if rx <= 0 or ry <= 0:
        raise ValueError("resolution must be positive")
    (x0, x1), (y0, y1) = x_range, y_range
    if x1 < x0 or y1 < y0:
        raise ValueError("degenerate grid range")
    nx = int(round((x1 - x0) / rx)) + 1
    ny = int(round((y1 - y0) / ry)) + 1
    xs = np.linspace(x0, x1, nx) if nx > 1 else np.array([float(x0)])
    ys = np.linspace(y0, y1, ny) if ny > 1 else np.array([float(y0)])
    X, Y = np.meshgrid(xs, ys)
    values = np.asarray(total_potential(scene, X, Y), dtype=float).reshape(ny, nx)
    return Grid(xs, ys, values)
