"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python -m tests.test_acceptance``.
"""
import functools
import sys
import time

import numpy as np
import pytest

from searchplan.dynamics import closed_form_states, rollout
from searchplan.geometry import Cuboid, segment_intersects
from searchplan.lp_format import export_lp
from searchplan.model import build, count_binaries
from searchplan.pipeline import plan
from searchplan.scenario import bundled_scenarios, read_scenario, scenario_from_dict
from searchplan.sensing import SensorModel
from searchplan.solver import SolveOptions, Status, branch_and_bound
from searchplan.zoning import build_zones, quantize_detection

from .conftest import DEFAULT_PARAMS, shed_dict
from .oracles import brute_force_miqp, dynamics_closed_form, input_fluctuation_penalty
from .test_bnb import INSTANCES, MAKERS, _goal_instance, _zone_instance
from .test_model import WALL


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, seconds):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({seconds:.2f}s) {detail}")
    return emit


@functools.lru_cache(maxsize=None)
def _plan(name, **overrides):
    sc = read_scenario(name)
    if overrides:
        sc = sc.with_overrides(**overrides)
    t = time.perf_counter()
    res = plan(sc)
    return res, time.perf_counter() - t


def test_criterion_1_dynamics_closed_form(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = worst_scalar = 0.0
    for _ in range(100):
        x0 = np.concatenate([rng.uniform(-100, 100, 3), rng.uniform(-15, 15, 3)])
        u = rng.uniform(DEFAULT_PARAMS.u_min, DEFAULT_PARAMS.u_max, size=(50, 3))
        xs = rollout(x0, u, DEFAULT_PARAMS)
        worst = max(worst, float(np.max(np.abs(closed_form_states(x0, u, DEFAULT_PARAMS) - xs))))
        ref = dynamics_closed_form(x0, u, 3.35, 0.2, 1.0)
        worst_scalar = max(worst_scalar, float(np.max(np.abs(ref - xs))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and worst_scalar <= 1e-9 and dt < 1.0
    report(1, ok, f"max deviation {worst:.2e} (independent oracle {worst_scalar:.2e}), tol 1e-9", dt)
    assert ok


def test_criterion_2_zone_structure(report):
    t0 = time.perf_counter()
    sensor = SensorModel.from_degrees(60, 17, 93)
    specs = quantize_detection(sensor, [17, 27, 53, 93], [0.95, 0.75, 0.25], [20, 30, 60])
    building = Cuboid.from_bounds([0, 0, 0], [60, 60, 60])
    zones = build_zones(building, ["+x", "-x", "+y", "-y"], specs, sensor)
    lengths = [len(z) for z in zones]
    dims = [sorted({tuple(float(v) for v in c.sigma) for c in z.cells}) for z in zones]
    dt = time.perf_counter() - t0
    ok = (lengths == [36, 16, 4]
          and dims == [[(20.0, 20.0, 10.0)], [(30.0, 30.0, 26.0)], [(60.0, 60.0, 40.0)]] and dt < 1.0)
    report(2, ok, f"lengths {lengths}, cell dims {[d[0] for d in dims]}", dt)
    assert ok


def test_criterion_3_binary_count(report):
    t0 = time.perf_counter()
    worst = count_binaries(90, [36], 0).worst_case
    cases = [(1, [0], [], False), (3, [0, 1], [], True), (4, [0], [WALL], True),
             (2, [1], [WALL], False), (5, [], [WALL], False)]
    matched = 0
    for T, zone_ids, obstacles, avoid in cases:
        d = shed_dict(horizon=T, obstacles=obstacles, options={"avoid_objects_of_interest": avoid},
                      detection_requirement=0.3)
        d["goal"]["window_start"] = T
        if not zone_ids:
            d.pop("objects_of_interest")
            d.pop("zones")
        sc = scenario_from_dict(d)
        chosen = [z for z in sc.build_zones() if z.index in zone_ids]
        m = build(sc, chosen)
        c = count_binaries(T, [len(z) for z in chosen], len(sc.avoided_parts()), True)
        lay = m.layout
        blocks = (sum(z.size for z in lay.z), sum(z.size for z in lay.zt), lay.zh.size,
                  sum(e.size for e in lay.eps), lay.y.size, lay.yt.size)
        matched += blocks == (c.z, c.z_tilde, c.z_hat, c.eps, c.y, c.y_tilde) and c.total == m.is_binary.sum()
    dt = time.perf_counter() - t0
    ok = worst == 22680 and matched == len(cases) and dt < 1.0
    report(3, ok, f"worst-case search binaries {worst} (expected 22680), {matched}/{len(cases)} block counts exact", dt)
    assert ok


def test_criterion_4_brute_force(report):
    t0 = time.perf_counter()
    agree, feasible, infeasible, worst = 0, 0, 0, 0.0
    for kind, seed in INSTANCES:
        m = MAKERS[kind](seed)
        assert m.is_binary.sum() <= 20 and m.layout.T <= 6
        ref = brute_force_miqp(m)
        sol = branch_and_bound(m, SolveOptions(relative_gap=1e-9, absolute_gap=1e-9))
        if ref is None:
            infeasible += 1
            agree += sol.status == Status.INFEASIBLE
            continue
        feasible += 1
        err = abs(sol.objective - ref[0]) / max(1.0, abs(ref[0]))
        worst = max(worst, err)
        agree += sol.status == Status.OPTIMAL and err <= 1e-6
    dt = time.perf_counter() - t0
    ok = agree == len(INSTANCES) >= 10 and feasible and infeasible and dt < 120
    report(4, ok, f"{agree}/{len(INSTANCES)} agree ({feasible} feasible, {infeasible} infeasible), "
                  f"worst relative objective error {worst:.1e}, tol 1e-6", dt)
    assert ok


def _selection(res):
    rep = res.report
    if rep is None:
        return None, 0, 0
    zone = rep.selected_zones.get(0)
    label = f"object0/zone{zone}"
    visits = rep.visitation.get(label, {})
    return zone, sum(1 for v in visits.values() if v), len(visits)


def test_criterion_5_zone_selection(report):
    lines, ok = [], True
    total = 0.0
    for q, want_zone, want_cells in ((0.9, 0, 9), (0.7, 1, 4)):
        res, dt = _plan("zone_selection", detection_requirement=q)
        total += dt
        zone, visited, n = _selection(res)
        good = (res.solution.has_plan and res.verified and zone == want_zone
                and visited == n == want_cells and dt < 600)
        ok &= good
        lines.append(f"Q={q}: zone {zone} (want {want_zone}), {visited}/{n} cells, "
                     f"status {res.solution.status} gap {res.solution.gap:.2g}, {dt:.0f}s")
    report(5, ok, "; ".join(lines), total)
    assert ok


def _goal_time_and_ifp(res):
    return res.report.goal_reached_at, input_fluctuation_penalty(res.solution.controls)


def test_criterion_6_weight_tradeoff(report):
    a, ta = _plan("weights", weight_time=1.0, weight_energy=0.0)
    b, tb = _plan("weights", weight_time=0.0, weight_energy=1.0)
    ok = a.verified and b.verified
    if ok:
        (ga, ia), (gb, ib) = _goal_time_and_ifp(a), _goal_time_and_ifp(b)
        ok = ga <= gb and ib <= ia and ta + tb < 600
        detail = f"goal arrival {ga} vs {gb}; input fluctuation {ia:.1f} vs {ib:.3g}"
    else:
        detail = f"no verified plan ({a.solution.status}, {b.solution.status})"
    report(6, ok, detail, ta + tb)
    assert ok


def test_criterion_7_obstacle(report):
    res, dt = _plan("obstacle")
    sc = res.scenario
    crosses = any(segment_intersects(c, sc.start.position, sc.goal.region.center, interior=True)
                  for _, c in sc.avoided_parts())
    rep = res.report
    ok = (crosses and res.verified and not rep.obstacle_violations and not rep.corner_cut_warnings
          and dt < 600)
    detail = (f"straight line blocked: {crosses}; violations {len(rep.obstacle_violations) if rep else '-'}, "
              f"corner cuts {len(rep.corner_cut_warnings) if rep else '-'}")
    report(7, ok, detail, dt)
    assert ok


@pytest.mark.slow
def test_criterion_8_soundness(report):
    total, parts, ok = 0.0, [], True
    runs = [("zone_selection", {"detection_requirement": 0.9}), ("zone_selection", {"detection_requirement": 0.7}),
            ("weights", {"weight_time": 1.0, "weight_energy": 0.0}),
            ("weights", {"weight_time": 0.0, "weight_energy": 1.0})]
    runs += [(name, {}) for name in bundled_scenarios()]
    for name, kw in runs:
        res, dt = _plan(name, **kw)
        total += dt
        if not res.solution.has_plan:
            parts.append(f"{name}: no plan ({res.solution.status})")
            continue
        rep = res.report
        good = (res.verified and rep.dynamics_residual_max <= 1e-6
                and all(f == 1.0 for f in rep.face_coverage_fraction.values()))
        ok &= good
        parts.append(f"{name}{kw or ''}: {'pass' if good else 'FAIL ' + '; '.join(rep.failures())}")
    report(8, ok, " | ".join(parts), total)
    assert ok


def test_criterion_9_lp_round_trip(report, tmp_path):
    scip = pytest.importorskip("pyscipopt")
    t0 = time.perf_counter()
    worst, n_ok = 0.0, 0
    models = [_goal_instance(0), _goal_instance(1), _zone_instance(0)]
    for k, m in enumerate(models):
        path = tmp_path / f"m{k}.lp"
        path.write_text(export_lp(m))
        ext = scip.Model()
        ext.hideOutput()
        ext.readProblem(str(path))
        ext.setParam("limits/gap", 0.0)
        ext.setParam("limits/absgap", 0.0)
        ext.optimize()
        ours = branch_and_bound(m, SolveOptions(relative_gap=1e-9, absolute_gap=1e-9))
        if ext.getStatus() != "optimal" or not ours.has_plan:
            continue
        err = abs(ext.getObjVal() - ours.objective) / max(1.0, abs(ours.objective))
        worst = max(worst, err)
        n_ok += err <= 1e-6
    dt = time.perf_counter() - t0
    ok = n_ok == len(models)
    report(9, ok, f"{n_ok}/{len(models)} models match the external solver, worst relative error {worst:.1e}", dt)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
