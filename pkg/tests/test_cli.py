import json

import numpy as np
import pytest
import yaml

from searchplan import cli
from searchplan.lp_format import count_lp_binaries
from searchplan.pipeline import PlanResult
from searchplan.scenario import read_trajectory, write_trajectory
from searchplan.solver import MipSolution, Status

from .conftest import shed_dict


@pytest.fixture(scope="module")
def hover_plan(tmp_path_factory):
    out = tmp_path_factory.mktemp("hover")
    code = cli.main(["plan", "hover", "--out", str(out)])
    return code, out


def _write(tmp_path, d, name="sc.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


def test_list(capsys):
    assert cli.main(["list"]) == 0
    assert "hover" in capsys.readouterr().out.split()


def test_plan_writes_outputs(hover_plan):
    code, out = hover_plan
    assert code == cli.EXIT_OK
    for name in ("scenario.yaml", "solution.json", "report.json", "trajectory.csv"):
        assert (out / name).is_file()
    for png in ("trajectory_3d.png", "positions.png", "velocities.png", "controls.png"):
        data = (out / "figures" / png).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
    meta = json.loads((out / "solution.json").read_text())
    assert meta["status"] == "optimal" and meta["verified"] is True
    assert meta["objective"] == pytest.approx(0.0, abs=1e-6)


def test_verify_accepts_and_rejects(hover_plan, tmp_path, capsys):
    _, out = hover_plan
    assert cli.main(["verify", str(out / "scenario.yaml"), str(out / "trajectory.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["pass"] is True
    x0, states, controls = read_trajectory((out / "trajectory.csv").read_text())
    states[2, 0] += 3.0
    bad = tmp_path / "bad.csv"
    bad.write_text(write_trajectory(x0, states, controls))
    report = tmp_path / "rep.json"
    assert cli.main(["verify", str(out / "scenario.yaml"), str(bad), "--out", str(report)]) == 1
    assert json.loads(report.read_text())["pass"] is False


def test_plot_data(hover_plan, tmp_path):
    _, out = hover_plan
    assert cli.main(["plot-data", str(out), "--out", str(tmp_path), "--no-figures"]) == 0
    lines = (tmp_path / "plot_series.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.PLOT_COLUMNS)
    assert len(lines) == 1 + 9
    assert json.loads((tmp_path / "plot_zones.json").read_text())["zones"] == []


def test_export_lp_and_zones(tmp_path, capsys):
    lp = tmp_path / "m.lp"
    assert cli.main(["export-lp", "obstacle", str(lp), "--T", "6"]) == 0
    assert count_lp_binaries(lp.read_text()) > 0
    assert cli.main(["zones", "zone_selection"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [z["length"] for z in data["zones"]] == [9, 4, 1]


def test_validation_exit_codes(tmp_path):
    assert cli.main(["plan", "zone_selection", "--out", str(tmp_path), "--Q", "0.99"]) == cli.EXIT_VALIDATION
    assert cli.main(["plan", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
    assert cli.main(["plan", "hover", "--out", str(tmp_path), "--tau", "0"]) == cli.EXIT_VALIDATION
    d = shed_dict()
    d["horizon"] = 0
    assert cli.main(["zones", _write(tmp_path, d)]) == cli.EXIT_VALIDATION


def test_infeasible_exit_without_trajectory(tmp_path):
    d = shed_dict(horizon=2)
    d["goal"] = {"min": [85, 85, 100], "max": [95, 95, 110], "window_start": 1}
    out = tmp_path / "out"
    assert cli.main(["plan", _write(tmp_path, d), "--out", str(out)]) == cli.EXIT_INFEASIBLE
    assert not (out / "trajectory.csv").exists()
    assert json.loads((out / "solution.json").read_text())["status"] == "infeasible"


def _fake_plan(status, values=None, report=None):
    def run(sc, opts=None):
        sol = MipSolution(status, values, np.inf, -np.inf, np.inf, 1, 0.0, "stub")
        return PlanResult(sc, [], sol, report)
    return run


def test_limit_exit(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "plan", _fake_plan(Status.LIMIT_HIT))
    assert cli.main(["plan", "hover", "--out", str(tmp_path)]) == cli.EXIT_LIMIT
    assert not (tmp_path / "trajectory.csv").exists()


def test_verifier_rejection_fails_closed(tmp_path, monkeypatch):
    from searchplan.pipeline import plan as real_plan

    def tampered(sc, opts=None):
        res = real_plan(sc, opts)
        res.report.obstacle_violations.append((1, "stub"))
        return res

    monkeypatch.setattr(cli, "plan", tampered)
    assert cli.main(["plan", "hover", "--out", str(tmp_path)]) == cli.EXIT_INTERNAL
    assert not (tmp_path / "trajectory.csv").exists()


def test_internal_error(tmp_path, monkeypatch):
    def boom(sc, opts=None):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "plan", boom)
    assert cli.main(["plan", "hover", "--out", str(tmp_path)]) == cli.EXIT_INTERNAL
