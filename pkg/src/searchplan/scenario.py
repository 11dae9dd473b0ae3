"""Mission scenario schema (YAML), validation, and output serialization.

Scenario files are YAML documents with ``schema_version: 1``. See
``docs/scenario_format.md`` for the full field list; the bundled scenarios
under ``searchplan/scenarios`` are working examples.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .dynamics import AgentParams, State
from .geometry import FACE_IDS, CompoundObject, Cuboid, ObjectKind, contains, is_inside, overlap_volume
from .sensing import SensorModel
from .solver.options import SolveOptions
from .zoning import DEFAULT_CUBE_FRACTION, Zone, ZoningError, build_zones, quantize_detection

SCHEMA_VERSION = 1

# Stable validation error codes.
E_SCHEMA = "E_SCHEMA"
E_START_OUTSIDE_WORKSPACE = "E_START_OUTSIDE_WORKSPACE"
E_START_IN_OBSTACLE = "E_START_IN_OBSTACLE"
E_GOAL_OUTSIDE_WORKSPACE = "E_GOAL_OUTSIDE_WORKSPACE"
E_WINDOW_AFTER_HORIZON = "E_WINDOW_AFTER_HORIZON"
E_NO_ZONE_MEETS_Q = "E_NO_ZONE_MEETS_Q"
E_ZONE_GEOMETRY = "E_ZONE_GEOMETRY"
E_ZONE_HITS_OBSTACLE = "E_ZONE_HITS_OBSTACLE"
E_ZONE_OUTSIDE_WORKSPACE = "E_ZONE_OUTSIDE_WORKSPACE"
E_GOAL_POINT = "E_GOAL_POINT"


class ScenarioError(ValueError):
    def __init__(self, code: str, message: str, path: str = ""):
        self.code = code
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"[{code}]{where}: {message}")


@dataclass(frozen=True)
class ObjectOfInterest:
    obj: CompoundObject
    faces: tuple[str, ...]


@dataclass(frozen=True)
class GoalSpec:
    region: Cuboid
    window_start: int
    point: np.ndarray | None = None

    @property
    def target(self) -> np.ndarray:
        return self.region.center if self.point is None else self.point


@dataclass(frozen=True)
class ZoneConfig:
    breakpoints: tuple[float, ...]
    pd: tuple[float, ...] | None = None
    cell_side: tuple[float | None, ...] | None = None
    cube_fraction: float = DEFAULT_CUBE_FRACTION


@dataclass(frozen=True)
class Scenario:
    name: str
    workspace: Cuboid
    agent: AgentParams
    sensor: SensorModel
    start: State
    horizon: int
    goal: GoalSpec | None
    weight_time: float
    weight_energy: float
    detection_requirement: float
    objects: tuple[ObjectOfInterest, ...] = ()
    obstacles: tuple[CompoundObject, ...] = ()
    zones: ZoneConfig | None = None
    solver: SolveOptions = field(default_factory=SolveOptions)
    avoid_objects_of_interest: bool = True
    segment_safe_avoidance: bool = False
    target_point: np.ndarray | None = None
    source: dict | None = field(default=None, compare=False, repr=False)

    @property
    def x_goal(self) -> np.ndarray:
        """Point the time penalty pulls towards."""
        if self.target_point is not None:
            return self.target_point
        if self.goal is not None:
            return self.goal.target
        return self.start.position

    def avoided_parts(self) -> list[tuple[str, Cuboid]]:
        """Cuboids the agent must stay out of, labelled for reports."""
        out = []
        for k, ob in enumerate(self.obstacles):
            for j, c in enumerate(ob.parts):
                out.append((f"{ob.name or f'obstacle{k}'}[{j}]", c))
        if self.avoid_objects_of_interest:
            for k, oi in enumerate(self.objects):
                for j, c in enumerate(oi.obj.parts):
                    out.append((f"{oi.obj.name or f'object{k}'}[{j}]", c))
        return out

    def zone_specs(self):
        if self.zones is None:
            return []
        return quantize_detection(self.sensor, self.zones.breakpoints, self.zones.pd,
                                  self.zones.cell_side)

    def build_zones(self) -> list[Zone]:
        """Zones of every object, flattened in (object, zone) order."""
        out: list[Zone] = []
        if not self.objects:
            return out
        specs = self.zone_specs()
        for k, oi in enumerate(self.objects):
            out.extend(build_zones(oi.obj, oi.faces, specs, self.sensor,
                                   self.zones.cube_fraction, object_index=k))
        return out

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with top-level fields replaced; ``tau`` sets the goal window start."""
        tau = kw.pop("tau", None)
        sc = dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})
        if tau is not None and sc.goal is not None:
            sc = dataclasses.replace(sc, goal=dataclasses.replace(sc.goal, window_start=int(tau)))
        validate(sc)
        return sc


# --------------------------------------------------------------------------- parsing

class _Reader:
    def __init__(self, data: Any, path: str = ""):
        self.data, self.path = data, path

    def _p(self, key) -> str:
        return f"{self.path}.{key}" if self.path else str(key)

    def has(self, key) -> bool:
        return isinstance(self.data, dict) and self.data.get(key) is not None

    def sub(self, key, required=True) -> "_Reader | None":
        if not self.has(key):
            if required:
                raise ScenarioError(E_SCHEMA, "missing required section", self._p(key))
            return None
        return _Reader(self.data[key], self._p(key))

    def items(self, key, required=False) -> list["_Reader"]:
        if not self.has(key):
            if required:
                raise ScenarioError(E_SCHEMA, "missing required list", self._p(key))
            return []
        v = self.data[key]
        if not isinstance(v, list):
            raise ScenarioError(E_SCHEMA, "expected a list", self._p(key))
        return [_Reader(x, f"{self._p(key)}[{i}]") for i, x in enumerate(v)]

    def num(self, key, default=None, lo=None, hi=None, lo_open=False, integer=False):
        if not self.has(key):
            if default is None:
                raise ScenarioError(E_SCHEMA, "missing required number", self._p(key))
            return default
        v = self.data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(E_SCHEMA, f"expected a number, got {v!r}", self._p(key))
        if integer and int(v) != v:
            raise ScenarioError(E_SCHEMA, f"expected an integer, got {v!r}", self._p(key))
        if not math.isfinite(v):
            raise ScenarioError(E_SCHEMA, "must be finite", self._p(key))
        if lo is not None and (v < lo or (lo_open and v == lo)):
            rel = ">" if lo_open else ">="
            raise ScenarioError(E_SCHEMA, f"must be {rel} {lo}, got {v}", self._p(key))
        if hi is not None and v > hi:
            raise ScenarioError(E_SCHEMA, f"must be <= {hi}, got {v}", self._p(key))
        return int(v) if integer else float(v)

    def vec(self, key, n=3, default=None):
        if not self.has(key):
            if default is None:
                raise ScenarioError(E_SCHEMA, "missing required vector", self._p(key))
            return np.asarray(default, dtype=float)
        v = self.data[key]
        if (not isinstance(v, list) or len(v) != n
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            raise ScenarioError(E_SCHEMA, f"expected a list of {n} numbers", self._p(key))
        return np.asarray(v, dtype=float)

    def nums(self, key, n=None, allow_none=False):
        if not self.has(key):
            return None
        v = self.data[key]
        ok = isinstance(v, list) and all(
            (x is None and allow_none) or (isinstance(x, (int, float)) and not isinstance(x, bool))
            for x in v)
        if not ok or (n is not None and len(v) != n):
            raise ScenarioError(E_SCHEMA, "expected a list of numbers"
                                + (f" of length {n}" if n is not None else ""), self._p(key))
        return tuple(None if x is None else float(x) for x in v)

    def text(self, key, default=None, choices=None):
        if not self.has(key):
            if default is None:
                raise ScenarioError(E_SCHEMA, "missing required string", self._p(key))
            return default
        v = self.data[key]
        if not isinstance(v, str):
            raise ScenarioError(E_SCHEMA, f"expected a string, got {v!r}", self._p(key))
        if choices is not None and v not in choices:
            raise ScenarioError(E_SCHEMA, f"expected one of {sorted(choices)}, got {v!r}", self._p(key))
        return v

    def flag(self, key, default):
        if not self.has(key):
            return default
        v = self.data[key]
        if not isinstance(v, bool):
            raise ScenarioError(E_SCHEMA, f"expected true/false, got {v!r}", self._p(key))
        return v

    def cuboid(self) -> Cuboid:
        if self.has("center") and self.has("dims"):
            dims = self.vec("dims")
            if np.any(dims <= 0):
                raise ScenarioError(E_SCHEMA, "dims must be positive", self._p("dims"))
            return Cuboid(self.vec("center"), dims)
        if self.has("min") and self.has("max"):
            lo, hi = self.vec("min"), self.vec("max")
            if np.any(hi <= lo):
                raise ScenarioError(E_SCHEMA, "max must exceed min on every axis", self.path)
            return Cuboid.from_bounds(lo, hi)
        raise ScenarioError(E_SCHEMA, "cuboid needs either center+dims or min+max", self.path)


def _compound(r: _Reader, kind: ObjectKind, default_name: str) -> CompoundObject:
    if r.has("parts"):
        parts = tuple(p.cuboid() for p in r.items("parts"))
        if not parts:
            raise ScenarioError(E_SCHEMA, "needs at least one part", r._p("parts"))
    else:
        parts = (r.cuboid(),)
    return CompoundObject(parts, kind, r.text("name", default_name))


def _solver_options(r: _Reader | None) -> SolveOptions:
    if r is None:
        return SolveOptions()
    kw: dict[str, Any] = {}
    for key in ("integer_tolerance", "relative_gap", "absolute_gap"):
        if r.has(key):
            kw[key] = r.num(key, lo=0, lo_open=True)
    if r.has("node_limit"):
        kw["node_limit"] = r.num("node_limit", lo=1, integer=True)
    if r.has("time_limit_s"):
        kw["time_limit_s"] = r.num("time_limit_s", lo=0, lo_open=True)
    if r.has("workers"):
        kw["workers"] = r.num("workers", lo=1, integer=True)
    kw["node_selection"] = r.text("node_selection", "best_bound", {"best_bound", "depth_first"})
    kw["branching"] = r.text("branching", "most_fractional", {"most_fractional", "first_fractional"})
    kw["mode"] = r.text("mode", "exact", {"exact", "rolling_horizon"})
    kw["dive"] = r.flag("heuristics", True)
    if r.has("window"):
        kw["window"] = r.num("window", lo=1, integer=True)
    if r.has("overlap"):
        kw["overlap"] = r.num("overlap", lo=0, integer=True)
    try:
        return SolveOptions(**kw)
    except ValueError as exc:
        raise ScenarioError(E_SCHEMA, str(exc), r.path) from None


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(E_SCHEMA, "scenario must be a mapping")
    r = _Reader(data)
    version = r.num("schema_version", integer=True)
    if version != SCHEMA_VERSION:
        raise ScenarioError(E_SCHEMA, f"unsupported schema_version {version}", "schema_version")

    workspace = r.sub("workspace").cuboid()
    a = r.sub("agent")
    try:
        agent = AgentParams(
            mass=a.num("mass", 3.35, lo=0, lo_open=True),
            air_resistance=a.num("air_resistance", 0.2, lo=0, hi=1),
            dt=a.num("dt", 1.0, lo=0, lo_open=True),
            u_min=tuple(a.vec("force_min", default=(-35, -35, -10))),
            u_max=tuple(a.vec("force_max", default=(35, 35, 35))),
            v_min=tuple(a.vec("velocity_min", default=(-15, -15, -15))),
            v_max=tuple(a.vec("velocity_max", default=(15, 15, 15))),
            gravity=a.num("gravity", 9.81, lo=0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(E_SCHEMA, str(exc), "agent") from None
    st = a.sub("start")
    start = State(st.vec("position"), st.vec("velocity", default=(0, 0, 0)))

    s = r.sub("sensor")
    fov = s.num("fov_deg", 60.0, lo=0, lo_open=True, hi=179.999)
    d_min = s.num("d_min", lo=0)
    d_max = s.num("d_max", lo=0)
    if d_max <= d_min:
        raise ScenarioError(E_SCHEMA, "d_max must exceed d_min", "sensor.d_max")
    sensor = SensorModel.from_degrees(fov, d_min, d_max)

    horizon = r.num("horizon", integer=True, lo=1)
    goal = None
    g = r.sub("goal", required=False)
    if g is not None:
        region = g.cuboid()
        tau = g.num("window_start", horizon, integer=True, lo=1)
        goal = GoalSpec(region, tau, g.vec("point") if g.has("point") else None)
    target = r.vec("target_point") if r.has("target_point") else None

    w = r.sub("weights")
    weight_time = w.num("time", lo=0)
    weight_energy = w.num("energy", lo=0)
    q = r.num("detection_requirement", 0.0, lo=0, hi=1)

    objects = []
    for o in r.items("objects_of_interest"):
        ob = _compound(o, ObjectKind.OBJECT_OF_INTEREST, f"object{len(objects)}")
        face_list = o.data.get("faces", ["+x", "-x", "+y", "-y"])
        if not isinstance(face_list, list) or not face_list or any(f not in FACE_IDS for f in face_list):
            raise ScenarioError(E_SCHEMA, f"faces must be a nonempty list drawn from {FACE_IDS}",
                                o._p("faces"))
        objects.append(ObjectOfInterest(ob, tuple(face_list)))
    obstacles = [_compound(o, ObjectKind.OBSTACLE, f"obstacle{i}")
                 for i, o in enumerate(r.items("obstacles"))]

    zones = None
    z = r.sub("zones", required=bool(objects))
    if z is not None:
        bps = z.nums("breakpoints")
        if bps is None:
            raise ScenarioError(E_SCHEMA, "missing required list", "zones.breakpoints")
        n = len(bps) - 1
        zones = ZoneConfig(bps, z.nums("pd", n), z.nums("cell_side", n, allow_none=True),
                           z.num("cube_fraction", DEFAULT_CUBE_FRACTION, lo=0, lo_open=True, hi=1))

    opts = r.sub("options", required=False)
    avoid = opts.flag("avoid_objects_of_interest", True) if opts else True
    segment_safe = opts.flag("segment_safe_avoidance", False) if opts else False

    sc = Scenario(
        name=r.text("name", "scenario"), workspace=workspace, agent=agent, sensor=sensor,
        start=start, horizon=horizon, goal=goal, weight_time=weight_time,
        weight_energy=weight_energy, detection_requirement=q, objects=tuple(objects),
        obstacles=tuple(obstacles), zones=zones, solver=_solver_options(r.sub("solver", False)),
        avoid_objects_of_interest=avoid, segment_safe_avoidance=segment_safe, target_point=target, source=data,
    )
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    """Semantic checks beyond the schema; raises ScenarioError with a stable code."""
    if not contains(sc.workspace, sc.start.position):
        raise ScenarioError(E_START_OUTSIDE_WORKSPACE, "start position lies outside the workspace",
                            "agent.start.position")
    for label, c in sc.avoided_parts():
        if contains(c, sc.start.position) and not _on_boundary(c, sc.start.position):
            raise ScenarioError(E_START_IN_OBSTACLE, f"start position lies inside {label}",
                                "agent.start.position")
    if sc.goal is not None:
        if not is_inside(sc.goal.region, sc.workspace):
            raise ScenarioError(E_GOAL_OUTSIDE_WORKSPACE, "goal region leaves the workspace", "goal")
        if sc.goal.window_start > sc.horizon:
            raise ScenarioError(E_WINDOW_AFTER_HORIZON,
                                f"goal window start {sc.goal.window_start} exceeds horizon {sc.horizon}",
                                "goal.window_start")
        if sc.goal.window_start < 1:
            raise ScenarioError(E_SCHEMA, "goal window start must be >= 1", "goal.window_start")
    elif sc.weight_time > 0 and sc.target_point is None:
        raise ScenarioError(E_GOAL_POINT, "a time weight without a goal needs target_point",
                            "target_point")
    if not sc.objects:
        return
    try:
        specs = sc.zone_specs()
    except ZoningError as exc:
        raise ScenarioError(E_ZONE_GEOMETRY, str(exc), "zones") from None
    if not any(sp.pd >= sc.detection_requirement for sp in specs):
        raise ScenarioError(E_NO_ZONE_MEETS_Q,
                            f"no zone meets Q={sc.detection_requirement} "
                            f"(zone pds {[round(sp.pd, 6) for sp in specs]})",
                            "detection_requirement")
    try:
        zones = sc.build_zones()
    except ZoningError as exc:
        raise ScenarioError(E_ZONE_GEOMETRY, str(exc), "zones") from None
    avoided = sc.avoided_parts()
    for zone in zones:
        if zone.pd < sc.detection_requirement:
            continue
        for cell in zone.cells:
            if not is_inside(cell.interior_cube, sc.workspace):
                raise ScenarioError(E_ZONE_OUTSIDE_WORKSPACE,
                                    f"zone {zone.index} cell {cell.label} interior cube leaves the workspace",
                                    "zones")
            for label, c in avoided:
                if overlap_volume(cell.cell_cuboid, c) > 1e-9:
                    raise ScenarioError(E_ZONE_HITS_OBSTACLE,
                                        f"zone {zone.index} cell {cell.label} overlaps {label}", "zones")


def _on_boundary(c: Cuboid, p) -> bool:
    a, b = c.plane_matrix
    return bool(np.any(np.abs(a @ np.asarray(p) - b) <= 1e-9))


def load_scenario(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(E_SCHEMA, f"not valid YAML: {exc}") from None
    return scenario_from_dict(data)


def bundled_scenarios() -> list[str]:
    root = resources.files("searchplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if p.exists():
        return load_scenario(p.read_text())
    name = str(path_or_name)
    res = resources.files("searchplan") / "scenarios" / f"{name}.yaml"
    if res.is_file():
        return load_scenario(res.read_text())
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


def dump_scenario(sc: Scenario) -> str:
    """Serialize to the YAML schema; ``load_scenario(dump_scenario(sc)) == sc`` field-wise."""
    def box(c: Cuboid):
        return {"center": c.center.tolist(), "dims": c.dims.tolist()}

    def compound(o: CompoundObject):
        return {"name": o.name, "parts": [box(c) for c in o.parts]}

    a = sc.agent
    d: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "workspace": box(sc.workspace),
        "agent": {
            "mass": a.mass, "air_resistance": a.air_resistance, "dt": a.dt, "gravity": a.gravity,
            "force_min": list(a.u_min), "force_max": list(a.u_max),
            "velocity_min": list(a.v_min), "velocity_max": list(a.v_max),
            "start": {"position": sc.start.position.tolist(), "velocity": sc.start.velocity.tolist()},
        },
        "sensor": {"fov_deg": math.degrees(sc.sensor.fov_angle), "d_min": sc.sensor.d_min,
                   "d_max": sc.sensor.d_max},
        "horizon": sc.horizon,
        "weights": {"time": sc.weight_time, "energy": sc.weight_energy},
        "detection_requirement": sc.detection_requirement,
        "objects_of_interest": [dict(compound(o.obj), faces=list(o.faces)) for o in sc.objects],
        "obstacles": [compound(o) for o in sc.obstacles],
        "options": {"avoid_objects_of_interest": sc.avoid_objects_of_interest,
                    "segment_safe_avoidance": sc.segment_safe_avoidance},
    }
    if sc.goal is not None:
        d["goal"] = dict(box(sc.goal.region), window_start=sc.goal.window_start)
        if sc.goal.point is not None:
            d["goal"]["point"] = sc.goal.point.tolist()
    if sc.target_point is not None:
        d["target_point"] = sc.target_point.tolist()
    if sc.zones is not None:
        z = {"breakpoints": list(sc.zones.breakpoints), "cube_fraction": sc.zones.cube_fraction}
        if sc.zones.pd is not None:
            z["pd"] = list(sc.zones.pd)
        if sc.zones.cell_side is not None:
            z["cell_side"] = list(sc.zones.cell_side)
        d["zones"] = z
    o = sc.solver
    sv: dict[str, Any] = {
        "integer_tolerance": o.integer_tolerance, "relative_gap": o.relative_gap,
        "absolute_gap": o.absolute_gap, "node_selection": o.node_selection.value,
        "branching": o.branching.value, "mode": o.mode.value, "overlap": o.overlap,
        "workers": o.workers, "heuristics": o.dive,
    }
    for key in ("node_limit", "time_limit_s", "window"):
        if getattr(o, key) is not None:
            sv[key] = getattr(o, key)
    d["solver"] = sv
    return yaml.safe_dump(d, sort_keys=False)


# --------------------------------------------------------------------------- outputs

TRAJECTORY_COLUMNS = ("t", "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "u_x", "u_y", "u_z")


def write_trajectory(x0, states: np.ndarray, controls: np.ndarray) -> str:
    """CSV with one row per step. Row t holds x_t and u_t; row T has no control."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    x0 = x0.vector if isinstance(x0, State) else np.asarray(x0, dtype=float)
    if len(states) != len(controls):
        raise ValueError("states and controls must have equal length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    all_states = np.vstack([x0.reshape(1, 6), states])
    for t, x in enumerate(all_states):
        u = [repr(float(v)) for v in controls[t]] if t < len(controls) else ["", "", ""]
        w.writerow([t] + [repr(float(v)) for v in x] + u)
    return buf.getvalue()


def read_trajectory(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of ``write_trajectory``: returns (x0, states x_1..T, controls u_0..T-1)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ValueError(f"trajectory header must be {','.join(TRAJECTORY_COLUMNS)}")
    body = rows[1:]
    if len(body) < 2:
        raise ValueError("trajectory needs at least two rows")
    xs = np.array([[float(v) for v in r[1:7]] for r in body])
    us = np.array([[float(v) for v in r[7:10]] for r in body[:-1]])
    for i, r in enumerate(body):
        if int(r[0]) != i:
            raise ValueError(f"row {i} has t={r[0]}")
    return xs[0], xs[1:], us


def zones_to_dict(zones: Sequence[Zone]) -> dict:
    out = []
    for z in zones:
        out.append({
            "object": z.object_index, "zone": z.index, "pd": z.pd, "d_near": z.spec.d_near,
            "depth": z.spec.depth, "length": len(z),
            "cells": [{
                "id": c.label, "part": c.part_index, "face": c.face_id,
                "grid_index": list(c.grid_index), "sigma": list(c.sigma),
                "cuboid": {"min": c.cell_cuboid.lo.tolist(), "max": c.cell_cuboid.hi.tolist()},
                "interior_cube": {"min": c.interior_cube.lo.tolist(), "max": c.interior_cube.hi.tolist()},
            } for c in z.cells],
        })
    return {"schema_version": SCHEMA_VERSION, "zones": out}


def write_zones(zones: Sequence[Zone]) -> str:
    return json.dumps(zones_to_dict(zones), indent=2)


def write_report(report) -> str:
    return json.dumps(report.to_dict(), indent=2)
