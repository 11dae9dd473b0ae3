import ast
import inspect

import numpy as np
import pytest

import searchplan.verify as verify_module
from searchplan.dynamics import rollout
from searchplan.geometry import Cuboid
from searchplan.scenario import scenario_from_dict
from searchplan.verify import (Trajectory, verify, verify_bounds, verify_coverage, verify_dynamics,
                               verify_goal, verify_obstacles, verify_visitation)

from .conftest import DEFAULT_PARAMS, DEFAULT_SENSOR, shed_dict

BOX = Cuboid.from_bounds([0, 0, 0], [10, 10, 10])


def _static(points, x0=None):
    """Trajectory through the given positions with zero velocity and hover force."""
    pts = np.asarray(points, dtype=float)
    states = np.hstack([pts, np.zeros_like(pts)])
    x0 = np.concatenate([pts[0], np.zeros(3)]) if x0 is None else x0
    return Trajectory(x0, states, np.tile(DEFAULT_PARAMS.hover_force, (len(pts), 1)))


def test_verifier_does_not_read_the_model():
    tree = ast.parse(inspect.getsource(verify_module))
    imported = {n.module for n in ast.walk(tree) if isinstance(n, ast.ImportFrom)}
    assert not any(m and ("model" in m or "solver" in m or "lp_format" in m) for m in imported)


def test_dynamics_residual(rng):
    x0 = np.array([0, 0, 50, 1, 2, 0.0])
    u = DEFAULT_PARAMS.hover_force + rng.uniform(-5, 5, size=(6, 3))
    states = rollout(x0, u, DEFAULT_PARAMS)
    assert verify_dynamics(Trajectory(x0, states, u), DEFAULT_PARAMS) < 1e-12
    bad = states.copy()
    bad[3, 4] += 0.25
    assert verify_dynamics(Trajectory(x0, bad, u), DEFAULT_PARAMS) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        verify_dynamics(Trajectory(x0, states, u[:-1]), DEFAULT_PARAMS)


def test_bounds_messages():
    ws = Cuboid.from_bounds([0, 0, 0], [100, 100, 100])
    tr = _static([[5, 5, 5], [5, 5, 101]])
    tr.controls[0, 2] = 40.0
    tr.states[1, 3] = -16.0
    msgs = verify_bounds(tr, ws, DEFAULT_PARAMS)
    assert any(m.startswith("t=2 p_z") for m in msgs)
    assert any(m.startswith("t=2 v_x") for m in msgs)
    assert any(m.startswith("t=0 u_z") for m in msgs)
    assert len(msgs) == 3


def test_obstacle_violation_cut_and_contact():
    tr = _static([[5, 5, 5], [20, 5, 5], [-5, 5, 5], [10, 5, 5]], x0=np.array([-5, 5, 5, 0, 0, 0.0]))
    viol, cuts, contact = verify_obstacles(tr, [("box", BOX)])
    assert viol == [(1, "box")]
    # segment t=2 -> t=3 passes through the box while both ends are outside
    assert (3, "box") in cuts
    assert contact == [(4, "box")]


def test_visitation_and_goal():
    sc = scenario_from_dict(shed_dict())
    zone = sc.build_zones()[0]
    c = zone.cells[0].interior_cube.center
    tr = _static([[0, 0, 60], c, [0, 0, 60], c])
    assert verify_visitation(tr, zone) == {zone.cells[0].label: [2, 4]}
    goal = Cuboid.from_bounds(c - 1, c + 1)
    assert verify_goal(tr, goal, 1) == 2
    assert verify_goal(tr, goal, 3) == 4
    assert verify_goal(tr, Cuboid.from_bounds([90, 90, 90], [91, 91, 91]), 1) is None
    with pytest.raises(ValueError):
        verify_goal(tr, goal, 5)


def test_coverage_from_cube_snapshot():
    sc = scenario_from_dict(shed_dict())
    zone = sc.build_zones()[0]
    obj = sc.objects[0].obj
    inside = _static([zone.cells[0].interior_cube.center])
    outside = _static([[0, 0, 60]])
    assert verify_coverage(inside, zone, obj, DEFAULT_SENSOR) == {"p0+z": 1.0}
    assert verify_coverage(outside, zone, obj, DEFAULT_SENSOR) == {"p0+z": 0.0}
    with pytest.raises(ValueError):
        verify_coverage(inside, zone, obj, DEFAULT_SENSOR, resolution=0)


def test_partial_coverage_fraction():
    """A footprint smaller than the face covers a known fraction of it."""
    face_box = Cuboid.from_bounds([0, 0, 0], [40, 20, 10])
    from searchplan.zoning import Zone
    sc = scenario_from_dict(shed_dict())
    zone = sc.build_zones()[0]
    cell = zone.cells[0]
    # snapshot from 17.5 m above the roof at the left edge of a 40 x 20 face
    d = 17.5
    side = 2 * d * np.tan(np.radians(30))
    p = np.array([0.0, 10.0, 10 + d])
    fake_cell = type(cell)(cell.cell_cuboid, Cuboid(p, np.full(3, 0.5)), cell.face, cell.grid_index,
                           cell.zone_index, cell.part_index, cell.d_near, cell.depth)
    fake = Zone(zone.spec, [fake_cell], zone.object_index)
    frac = verify_coverage(_static([p]), fake, face_box, DEFAULT_SENSOR, resolution=0.05)["p0+z"]
    expected = (side / 2) * min(side, 20) / (40 * 20)
    assert frac == pytest.approx(expected, abs=0.01)


def test_full_report_on_scenario():
    sc = scenario_from_dict(shed_dict())
    zones = sc.build_zones()
    c0 = zones[0].cells[0].interior_cube.center
    c1 = zones[1].cells[0].interior_cube.center
    g = sc.goal.region.center
    pts = [c1] + [c0] * 8 + [g]
    rep = verify(sc, _static(pts, x0=sc.start.vector))
    assert rep.selected_zones == {0: 0}
    assert rep.selected_zone_pd == pytest.approx(0.9)
    assert rep.goal_reached_at == 10
    assert rep.face_coverage_fraction == {"object0/p0+z": 1.0}
    assert rep.dynamics_residual_max > 1.0
    assert not rep.passed
    assert any("dynamics residual" in f for f in rep.failures())
    d = rep.to_dict()
    assert d["pass"] is False and d["selected_zones"] == {"0": 0}


def test_report_flags_missing_zone_and_goal():
    sc = scenario_from_dict(shed_dict())
    rep = verify(sc, _static([[-20, 30, 42]] * 10, x0=sc.start.vector))
    assert rep.selected_zones == {0: None}
    assert rep.missing_cells
    assert rep.goal_reached_at == 10
    sc2 = scenario_from_dict(shed_dict(goal={"min": [80, 80, 80], "max": [90, 90, 90], "window_start": 3}))
    rep2 = verify(sc2, _static([[-20, 30, 42]] * 10, x0=sc2.start.vector))
    assert "goal region not reached inside its window" in rep2.failures()


def test_zone_below_requirement_fails():
    sc = scenario_from_dict(shed_dict(detection_requirement=0.3))
    zones = sc.build_zones()
    c1 = zones[1].cells[0].interior_cube.center
    rep = verify(sc, _static([c1] * 10, x0=np.concatenate([c1, np.zeros(3)])))
    assert rep.selected_zones == {0: 1}
    sc_hi = sc.with_overrides(detection_requirement=0.5)
    rep_hi = verify(sc_hi, _static([c1] * 10, x0=np.concatenate([c1, np.zeros(3)])))
    assert any("below Q" in f for f in rep_hi.failures())
