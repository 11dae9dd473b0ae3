"""PNG figures of a plan: 3D path with the map, and per-axis time series."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from mpl_toolkits.mplot3d.art3d import Line3DCollection  # noqa: E402

from .geometry import Cuboid  # noqa: E402

_EDGES = [(0, 1), (0, 2), (0, 4), (1, 3), (1, 5), (2, 3), (2, 6), (3, 7), (4, 5), (4, 6), (5, 7), (6, 7)]


def _box_segments(c: Cuboid) -> list:
    k = c.corners()
    return [(k[a], k[b]) for a, b in _EDGES]


def _boxes(ax, boxes: Sequence[Cuboid], color: str, lw: float = 0.8, label: str | None = None):
    segs = [s for c in boxes for s in _box_segments(c)]
    if segs:
        ax.add_collection3d(Line3DCollection(segs, colors=color, linewidths=lw, label=label))


def plot_trajectory_3d(path, positions: np.ndarray, objects=(), obstacles=(), cubes=(),
                       goal: Cuboid | None = None, workspace: Cuboid | None = None,
                       title: str = "") -> Path:
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    _boxes(ax, objects, "tab:blue", 1.2, "object of interest")
    _boxes(ax, obstacles, "tab:red", 1.2, "obstacle")
    _boxes(ax, cubes, "tab:green", 0.6, "interior cubes")
    if goal is not None:
        _boxes(ax, [goal], "tab:purple", 1.0, "goal")
    ax.plot(positions[:, 0], positions[:, 1], positions[:, 2], "-o", ms=2, color="black", label="path")
    ax.scatter(*positions[0], color="tab:orange", s=30, label="start")
    if workspace is not None:
        ax.set_xlim(workspace.lo[0], workspace.hi[0])
        ax.set_ylim(workspace.lo[1], workspace.hi[1])
        ax.set_zlim(workspace.lo[2], workspace.hi[2])
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=7)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_series(path, t: np.ndarray, series: np.ndarray, ylabel: str, labels=("x", "y", "z"),
                step: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for k, lab in enumerate(labels):
        if step:
            ax.step(t, series[:, k], where="post", label=lab)
        else:
            ax.plot(t, series[:, k], "-", marker=".", label=lab)
    ax.set_xlabel("time step")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_plan(out_dir, sc, x0, states, controls, zones=(), selected: dict | None = None) -> list[Path]:
    """Write trajectory_3d.png, positions.png, velocities.png and controls.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pos = np.vstack([np.asarray(x0)[:3], states[:, :3]])
    vel = np.vstack([np.asarray(x0)[3:], states[:, 3:]])
    t = np.arange(len(pos))
    cubes = [c.interior_cube for z in zones
             if selected is None or selected.get(z.object_index) == z.index for c in z.cells]
    objects = [c for o in sc.objects for c in o.obj.parts]
    obstacles = [c for o in sc.obstacles for c in o.parts]
    goal = sc.goal.region if sc.goal is not None else None
    return [
        plot_trajectory_3d(out / "trajectory_3d.png", pos, objects, obstacles, cubes, goal,
                           sc.workspace, sc.name),
        plot_series(out / "positions.png", t, pos, "position [m]"),
        plot_series(out / "velocities.png", t, vel, "velocity [m/s]"),
        plot_series(out / "controls.png", np.arange(len(controls)), np.asarray(controls),
                    "force [N]", step=True),
    ]
