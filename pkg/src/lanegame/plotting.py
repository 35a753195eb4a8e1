"""Static figures rendered from exported run and grid data."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .field import Grid  # noqa: E402
from .sim import HOST, SimLog  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectories(log: SimLog, path, lane_marks=()):
    """Top-down X/Y paths of every vehicle with the lane lines drawn in."""
    fig, ax = plt.subplots(figsize=(10, 3.2))
    for y, kind in lane_marks:
        ax.axhline(y, color="0.3", lw=1.2 if kind == "edge" else 0.8,
                   ls="-" if kind == "edge" else "--")
    for name in log.names:
        x, y = log.series(name, "x"), log.series(name, "y")
        ax.plot(x, y, lw=2.2 if name == HOST else 1.4,
                label=name if name == HOST else f"{name} ({log.styles.get(name, '')})")
    ax.set_xlabel("X [m]")
    ax.set_ylabel("Y [m]")
    ax.set_title(f"{log.scenario}: trajectories")
    ax.legend(loc="upper left", fontsize=8, ncol=len(log.names))
    _save(fig, path)


def plot_velocities(log: SimLog, path):
    fig, ax = plt.subplots(figsize=(8, 3.5))
    t = log.times
    for name in log.names:
        ax.plot(t, log.series(name, "speed"), lw=2 if name == HOST else 1.2, label=name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("speed [m/s]")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_accelerations(log: SimLog, path):
    """Host longitudinal command and applied lateral control over time."""
    t = log.times
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    top.step(t, [r.host_accel for r in log.records], where="post", label="host a_x")
    for name in log.names[1:]:
        top.step(t, [r.accels[name] for r in log.records], where="post", lw=1, label=name)
    top.set_ylabel("a_x [m/s^2]")
    top.legend(fontsize=8)
    top.grid(alpha=0.3)
    bottom.plot(t, [r.control for r in log.records], color="C3")
    bottom.set_ylabel("a_y [m/s^2]")
    bottom.set_xlabel("t [s]")
    bottom.grid(alpha=0.3)
    _save(fig, path)


def plot_grid(grid: Grid, path, surface: bool = False):
    """Heatmap of a sampled potential grid, or a 3-D surface when ``surface``."""
    if surface:
        fig = plt.figure(figsize=(9, 5))
        ax = fig.add_subplot(projection="3d")
        X, Y = np.meshgrid(grid.xs, grid.ys)
        ax.plot_surface(X, Y, grid.values, cmap="viridis", linewidth=0, antialiased=True)
        ax.set_zlabel("potential")
    else:
        fig, ax = plt.subplots(figsize=(10, 3.5))
        mesh = ax.pcolormesh(grid.xs, grid.ys, grid.values, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="potential")
    ax.set_xlabel("X [m]")
    ax.set_ylabel("Y [m]")
    _save(fig, path)
