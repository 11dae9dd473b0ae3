"""Geometric and dynamic checks of a trajectory against the mission.

Nothing here reads the optimization model. Every check recomputes its answer
from the scenario geometry, the agent dynamics and the sampled states, so a
plan that passes is correct regardless of how it was produced.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import AgentParams, step
from .geometry import Cuboid, contains, faces, segment_intersects, strictly_contains
from .sensing import SensorModel, footprint_side
from .zoning import Zone

log = logging.getLogger(__name__)

DYNAMICS_TOL = 1e-6
BOUND_TOL = 1e-6
CONTACT_TOL = 1e-9
DEFAULT_RESOLUTION = 0.5


@dataclass
class Trajectory:
    """x0 plus states x_1..x_T and controls u_0..u_{T-1}."""

    x0: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(6)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 6)
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1, 3)

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def positions(self) -> np.ndarray:
        """p_1..p_T, shape (T, 3); row t-1 is time t."""
        return self.states[:, :3]

    @property
    def all_positions(self) -> np.ndarray:
        """p_0..p_T."""
        return np.vstack([self.x0[:3], self.positions])


@dataclass
class VerificationReport:
    dynamics_residual_max: float
    bound_violations: list[str] = field(default_factory=list)
    obstacle_violations: list[tuple[int, str]] = field(default_factory=list)
    corner_cut_warnings: list[tuple[int, str]] = field(default_factory=list)
    contact_warnings: list[tuple[int, str]] = field(default_factory=list)
    visitation: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    selected_zones: dict[int, int | None] = field(default_factory=dict)
    selected_zone_pd: float | None = None
    detection_requirement: float = 0.0
    goal_reached_at: int | None = None
    goal_required: bool = False
    face_coverage_fraction: dict[str, float] = field(default_factory=dict)
    missing_cells: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.dynamics_residual_max > DYNAMICS_TOL:
            return False
        if self.bound_violations or self.obstacle_violations:
            return False
        if any(z is None for z in self.selected_zones.values()):
            return False
        if self.selected_zones and (self.selected_zone_pd is None
                                    or self.selected_zone_pd < self.detection_requirement):
            return False
        if self.goal_required and self.goal_reached_at is None:
            return False
        return all(f >= 1.0 for f in self.face_coverage_fraction.values())

    def failures(self) -> list[str]:
        out = []
        if self.dynamics_residual_max > DYNAMICS_TOL:
            out.append(f"dynamics residual {self.dynamics_residual_max:.3g}")
        out += self.bound_violations
        out += [f"t={t} inside {name}" for t, name in self.obstacle_violations]
        for k, z in self.selected_zones.items():
            if z is None:
                out.append(f"object {k}: no zone fully visited")
        out += [f"cell {c} never visited" for c in self.missing_cells]
        if self.selected_zones and (self.selected_zone_pd is None
                                    or self.selected_zone_pd < self.detection_requirement):
            out.append(f"selected zone pd {self.selected_zone_pd} below Q={self.detection_requirement}")
        if self.goal_required and self.goal_reached_at is None:
            out.append("goal region not reached inside its window")
        out += [f"face {f} coverage {v:.4f}" for f, v in self.face_coverage_fraction.items() if v < 1.0]
        return out

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "failures": self.failures(),
            "dynamics_residual_max": self.dynamics_residual_max,
            "bound_violations": list(self.bound_violations),
            "obstacle_violations": [list(v) for v in self.obstacle_violations],
            "corner_cut_warnings": [list(v) for v in self.corner_cut_warnings],
            "contact_warnings": [list(v) for v in self.contact_warnings],
            "visitation": self.visitation,
            "selected_zones": {str(k): v for k, v in self.selected_zones.items()},
            "selected_zone_pd": self.selected_zone_pd,
            "detection_requirement": self.detection_requirement,
            "goal_reached_at": self.goal_reached_at,
            "face_coverage_fraction": self.face_coverage_fraction,
        }


def verify_dynamics(traj: Trajectory, params: AgentParams) -> float:
    if traj.controls.shape[0] != traj.states.shape[0]:
        raise ValueError(f"{traj.states.shape[0]} states but {traj.controls.shape[0]} controls")
    prev = traj.x0
    worst = 0.0
    for x, u in zip(traj.states, traj.controls):
        worst = max(worst, float(np.max(np.abs(x - step(prev, u, params)))))
        prev = x
    return worst


def verify_bounds(traj: Trajectory, workspace: Cuboid, params: AgentParams,
                  tol: float = BOUND_TOL) -> list[str]:
    out = []
    lo = np.concatenate([workspace.lo, params.v_min])
    hi = np.concatenate([workspace.hi, params.v_max])
    names = ("p_x", "p_y", "p_z", "v_x", "v_y", "v_z")
    for t, x in enumerate(traj.states, start=1):
        for d in np.flatnonzero((x < lo - tol) | (x > hi + tol)):
            out.append(f"t={t} {names[d]}={x[d]:.6g} outside [{lo[d]:g}, {hi[d]:g}]")
    umin, umax = np.asarray(params.u_min), np.asarray(params.u_max)
    for t, u in enumerate(traj.controls):
        for d in np.flatnonzero((u < umin - tol) | (u > umax + tol)):
            out.append(f"t={t} u_{'xyz'[d]}={u[d]:.6g} outside [{umin[d]:g}, {umax[d]:g}]")
    return out


def verify_obstacles(traj: Trajectory, obstacles: Sequence[tuple[str, Cuboid]]):
    """(violations, corner_cut_warnings, contact_warnings) as lists of (t, name).

    A violation is a sample strictly inside a box. A corner cut is a segment
    p_{t-1} -> p_t crossing a box interior while both ends are outside; it is
    reported at t. Contact means a sample on a box boundary.
    """
    pts = traj.all_positions
    violations, cuts, contact = [], [], []
    for name, box in obstacles:
        inside = [strictly_contains(box, p) for p in pts]
        for t in range(1, len(pts)):
            if inside[t]:
                violations.append((t, name))
            elif contains(box, pts[t], tol=CONTACT_TOL):
                contact.append((t, name))
            if not inside[t] and not inside[t - 1] and segment_intersects(box, pts[t - 1], pts[t], interior=True):
                cuts.append((t, name))
    violations.sort()
    cuts.sort()
    contact.sort()
    return violations, cuts, contact


def verify_visitation(traj: Trajectory, zone: Zone) -> dict[str, list[int]]:
    """Cell label -> times t (1-based) with p_t inside that cell's interior cube."""
    pts = traj.positions
    return {cell.label: [t + 1 for t in range(len(pts)) if contains(cell.interior_cube, pts[t])]
            for cell in zone.cells}


def visitation_complete(visits: dict[str, list[int]]) -> bool:
    return all(len(v) > 0 for v in visits.values())


def _face_key(part: int, face_id: str) -> str:
    return f"p{part}{face_id}"


def verify_coverage(traj: Trajectory, zone: Zone, obj, sensor: SensorModel,
                    resolution: float = DEFAULT_RESOLUTION) -> dict[str, float]:
    """Fraction of each searched face inside some in-cube snapshot footprint.

    Raster points sit at the centres of a ``resolution`` grid over the face.
    Every sample inside an interior cube of ``zone`` takes a snapshot of that
    cell's face: a square of side r(d) centred at the sample's perpendicular
    foot on the face plane.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    parts = obj.parts if hasattr(obj, "parts") else (obj,)
    face_ids = sorted({(c.part_index, c.face_id) for c in zone.cells})
    pts = traj.positions
    out = {}
    for part, fid in face_ids:
        face = next(f for f in faces(parts[part], owner=part) if f.face_id == fid)
        nu = max(1, int(np.ceil(face.extent[0] / resolution - 1e-9)))
        nv = max(1, int(np.ceil(face.extent[1] / resolution - 1e-9)))
        su = (np.arange(nu) + 0.5) * face.extent[0] / nu
        sv = (np.arange(nv) + 0.5) * face.extent[1] / nv
        covered = np.zeros((nu, nv), dtype=bool)
        plane = face.origin[face.axis]
        for cell in zone.cells:
            if cell.part_index != part or cell.face_id != fid:
                continue
            for p in pts:
                if not contains(cell.interior_cube, p):
                    continue
                d = abs(p[face.axis] - plane)
                half = footprint_side(d, sensor) / 2.0
                fu = float((p - face.origin) @ face.u_axis)
                fv = float((p - face.origin) @ face.v_axis)
                mu = np.abs(su - fu) <= half
                mv = np.abs(sv - fv) <= half
                covered |= mu[:, None] & mv[None, :]
        out[_face_key(part, fid)] = float(covered.mean())
    return out


def verify_goal(traj: Trajectory, goal: Cuboid, window_start: int) -> int | None:
    """Earliest t in [window_start, T] with p_t in the goal region."""
    if not 1 <= window_start <= traj.T:
        raise ValueError(f"window start {window_start} outside [1, {traj.T}]")
    for t in range(window_start, traj.T + 1):
        if contains(goal, traj.positions[t - 1]):
            return t
    return None


def zone_label(zone: Zone) -> str:
    return f"object{zone.object_index}/zone{zone.index}"


def verify(scenario, traj: Trajectory, zones: Sequence[Zone] | None = None,
           resolution: float = DEFAULT_RESOLUTION) -> VerificationReport:
    """Run every check for ``scenario``; zones default to the scenario's own."""
    sc = scenario
    if zones is None:
        zones = sc.build_zones()
    rep = VerificationReport(verify_dynamics(traj, sc.agent))
    rep.detection_requirement = sc.detection_requirement
    rep.bound_violations = verify_bounds(traj, sc.workspace, sc.agent)
    rep.obstacle_violations, rep.corner_cut_warnings, rep.contact_warnings = \
        verify_obstacles(traj, sc.avoided_parts())

    by_object: dict[int, list[Zone]] = {}
    for z in zones:
        by_object.setdefault(z.object_index, []).append(z)
    pds = []
    for k, zlist in sorted(by_object.items()):
        visits = {}
        for z in zlist:
            visits[z.index] = verify_visitation(traj, z)
            rep.visitation[zone_label(z)] = visits[z.index]
        complete = [z for z in zlist if visitation_complete(visits[z.index])]
        if complete:
            chosen = max(complete, key=lambda z: (z.pd, -z.index))
            rep.selected_zones[k] = chosen.index
            pds.append(chosen.pd)
        else:
            rep.selected_zones[k] = None
            eligible = [z for z in zlist if z.pd >= sc.detection_requirement] or zlist
            chosen = max(eligible, key=lambda z: (sum(map(bool, visits[z.index].values())), z.pd))
            rep.missing_cells += [c for c, ts in visits[chosen.index].items() if not ts]
        cov = verify_coverage(traj, chosen, sc.objects[k].obj, sc.sensor, resolution)
        for key, frac in cov.items():
            rep.face_coverage_fraction[f"object{k}/{key}"] = frac
    rep.selected_zone_pd = min(pds) if pds and len(pds) == len(by_object) else None
    if sc.goal is not None:
        rep.goal_required = True
        rep.goal_reached_at = verify_goal(traj, sc.goal.region, sc.goal.window_start)
    if rep.corner_cut_warnings:
        log.info("corner-cut warnings: %s", rep.corner_cut_warnings)
    return rep
