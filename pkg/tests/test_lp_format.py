import numpy as np
import pytest

from searchplan.lp_format import count_lp_binaries, export_lp
from searchplan.model import build
from searchplan.scenario import read_scenario, scenario_from_dict
from searchplan.solver import SolveOptions, branch_and_bound

from .conftest import scenario_dict, shed_dict
from .test_bnb import _goal_instance, _zone_instance


def test_sections_in_order():
    m = build(scenario_from_dict(shed_dict()))
    text = export_lp(m, "shed")
    heads = [ln for ln in text.splitlines() if ln in ("Minimize", "Subject To", "Bounds", "Binaries", "End")]
    assert heads == ["Minimize", "Subject To", "Bounds", "Binaries", "End"]
    assert all(len(ln) <= 110 for ln in text.splitlines())
    assert count_lp_binaries(text) == int(m.is_binary.sum())
    assert text.count(" c") >= m.m


def test_binary_count_on_bundled():
    sc = read_scenario("obstacle")
    m = build(sc)
    assert count_lp_binaries(export_lp(m)) == int(m.is_binary.sum())


def test_constant_carried():
    m = build(scenario_from_dict(scenario_dict(weights={"time": 1, "energy": 0})))
    text = export_lp(m)
    assert m.const > 0
    assert f" obj_const = {float(m.const)!r}" in text


def _scip_solve(text, tmp_path):
    scip = pytest.importorskip("pyscipopt")
    path = tmp_path / "model.lp"
    path.write_text(text)
    mdl = scip.Model()
    mdl.hideOutput()
    mdl.readProblem(str(path))
    n_bin = sum(1 for v in mdl.getVars() if v.vtype() == "BINARY")
    mdl.optimize()
    status = mdl.getStatus()
    obj = mdl.getObjVal() if status == "optimal" else None
    return status, obj, n_bin


@pytest.mark.parametrize("make,seed", [(_goal_instance, 0), (_goal_instance, 1), (_zone_instance, 0)])
def test_external_solver_agrees(make, seed, tmp_path):
    m = make(seed)
    status, obj, n_bin = _scip_solve(export_lp(m), tmp_path)
    assert n_bin == int(m.is_binary.sum())
    ours = branch_and_bound(m, SolveOptions(relative_gap=1e-6))
    assert status == "optimal" and ours.has_plan
    assert obj == pytest.approx(ours.objective, rel=1e-4, abs=1e-4)


def test_external_solver_agrees_on_infeasible(tmp_path):
    d = shed_dict(horizon=2)
    d["goal"] = {"min": [85, 85, 100], "max": [95, 95, 110], "window_start": 1}
    status, _, _ = _scip_solve(export_lp(build(scenario_from_dict(d))), tmp_path)
    assert status == "infeasible"
