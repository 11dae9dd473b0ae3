"""Command-line interface.

    searchplan plan SCENARIO --out DIR      solve, verify, write outputs and figures
    searchplan verify SCENARIO TRAJECTORY   check a trajectory table
    searchplan export-lp SCENARIO OUT       write the program in LP format
    searchplan zones SCENARIO OUT           write zone geometry as JSON
    searchplan plot-data PLAN_DIR           plot-ready series and figures for a plan

SCENARIO is a path or the name of a bundled scenario. Exit codes: 0 success,
1 infeasible (or verification failed), 2 validation error, 3 limit reached
without a plan, 4 internal error. Set SEARCHPLAN_LOG=DEBUG|INFO|WARNING for
log output on stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .lp_format import export_lp
from .model import ModelError, build
from .pipeline import plan
from .scenario import (ScenarioError, bundled_scenarios, dump_scenario, load_scenario, read_scenario,
                       read_trajectory, write_trajectory, write_zones)
from .solver import Status
from .verify import Trajectory, verify

EXIT_OK, EXIT_INFEASIBLE, EXIT_VALIDATION, EXIT_LIMIT, EXIT_INTERNAL = 0, 1, 2, 3, 4

log = logging.getLogger("searchplan")


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


def _write(path: Path, text: str, written: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written.append(str(path))


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario overrides")
    g.add_argument("--Q", type=float, help="detection requirement")
    g.add_argument("--w1", type=float, help="weight of the time penalty")
    g.add_argument("--w2", type=float, help="weight of the control-smoothness penalty")
    g.add_argument("--T", type=int, help="horizon in steps")
    g.add_argument("--tau", type=int, help="first step of the goal window")
    s = p.add_argument_group("solver")
    s.add_argument("--mode", choices=["exact", "rolling_horizon"])
    s.add_argument("--window", type=int)
    s.add_argument("--overlap", type=int)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--time-limit", type=float, help="seconds")
    s.add_argument("--workers", type=int)
    s.add_argument("--node-selection", choices=["best_bound", "depth_first"])
    s.add_argument("--relative-gap", type=float)


def _load(args):
    sc = read_scenario(args.scenario)
    if hasattr(args, "Q"):
        tau = args.tau
        T = args.T
        if T is not None and tau is None and sc.goal is not None and sc.goal.window_start > T:
            tau = T
        sc = sc.with_overrides(detection_requirement=args.Q, weight_time=args.w1,
                               weight_energy=args.w2, horizon=T, tau=tau)
        kw = {"mode": args.mode, "window": args.window, "overlap": args.overlap,
              "node_limit": args.node_limit, "time_limit_s": args.time_limit,
              "workers": args.workers, "node_selection": args.node_selection,
              "relative_gap": args.relative_gap}
        kw = {k: v for k, v in kw.items() if v is not None}
        if kw:
            try:
                opts = dataclasses.replace(sc.solver, **kw)
            except ValueError as exc:
                raise ScenarioError("E_SCHEMA", str(exc), "solver") from None
            sc = dataclasses.replace(sc, solver=opts)
    return sc


def cmd_plan(args) -> int:
    sc = _load(args)
    out = Path(args.out)
    written: list[str] = []
    res = plan(sc)
    sol = res.solution
    meta = {
        "scenario": sc.name, "status": sol.status, "message": sol.message,
        "objective": sol.objective, "bound": sol.bound, "gap": sol.gap,
        "nodes_explored": sol.nodes_explored, "wall_time_s": sol.wall_time_s,
        "heuristic": sol.heuristic, "selected_zones": None, "verified": res.verified,
    }
    if sol.has_plan:
        meta["selected_zones"] = {str(k): v for k, v in res.report.selected_zones.items()}
        meta["selected_zone_pd"] = res.report.selected_zone_pd
        meta["goal_reached_at"] = res.report.goal_reached_at
    _write(out / "scenario.yaml", dump_scenario(sc), written)
    _write(out / "solution.json", json.dumps(_json_safe(meta), indent=2), written)
    if res.report is not None:
        _write(out / "report.json", json.dumps(_json_safe(res.report.to_dict()), indent=2), written)
    if not sol.has_plan:
        print(f"{sol.status}: {sol.message}", file=sys.stderr)
        return EXIT_INFEASIBLE if sol.status == Status.INFEASIBLE else EXIT_LIMIT
    if not res.verified:
        print("plan rejected by the verifier: " + "; ".join(res.report.failures()), file=sys.stderr)
        return EXIT_INTERNAL
    traj = res.trajectory
    _write(out / "trajectory.csv", write_trajectory(traj.x0, traj.states, traj.controls), written)
    if args.figures:
        from .plotting import render_plan
        written += [str(p) for p in render_plan(out / "figures", sc, traj.x0, traj.states, traj.controls,
                                                res.zones, res.report.selected_zones)]
    print(f"{sol.status} objective={sol.objective:.6g} gap={sol.gap:.3g} "
          f"nodes={sol.nodes_explored} zones={meta['selected_zones']} -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = read_scenario(args.scenario)
    x0, states, controls = read_trajectory(Path(args.trajectory).read_text())
    if not np.allclose(x0, sc.start.vector, atol=1e-9):
        print("warning: trajectory row 0 differs from the scenario start state", file=sys.stderr)
    if len(states) != sc.horizon:
        sc = sc.with_overrides(horizon=len(states),
                               tau=min(sc.goal.window_start, len(states)) if sc.goal else None)
    rep = verify(sc, Trajectory(x0, states, controls))
    text = json.dumps(_json_safe(rep.to_dict()), indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    if not rep.passed:
        print("verification failed: " + "; ".join(rep.failures()), file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_INFEASIBLE


def cmd_export_lp(args) -> int:
    sc = _load(args)
    model = build(sc)
    Path(args.out).write_text(export_lp(model, sc.name))
    return EXIT_OK


def cmd_zones(args) -> int:
    sc = read_scenario(args.scenario)
    text = write_zones(sc.build_zones())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


PLOT_COLUMNS = ("t", "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "speed", "u_x", "u_y", "u_z", "du_norm")


def cmd_plot_data(args) -> int:
    src = Path(args.plan_dir)
    out = Path(args.out) if args.out else src
    sc = load_scenario((src / "scenario.yaml").read_text())
    x0, states, controls = read_trajectory((src / "trajectory.csv").read_text())
    xs = np.vstack([x0, states])
    rows = []
    for t, x in enumerate(xs):
        u = controls[t] if t < len(controls) else None
        du = float(np.linalg.norm(controls[t] - controls[t - 1])) if u is not None and t > 0 else None
        rows.append([t, *x.tolist(), float(np.linalg.norm(x[3:])),
                     *(u.tolist() if u is not None else [None] * 3), du])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "plot_series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for r in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    zones = sc.build_zones()
    rep = verify(sc, Trajectory(x0, states, controls), zones)
    (out / "plot_zones.json").write_text(write_zones(zones))
    if args.figures:
        from .plotting import render_plan
        render_plan(out / "figures", sc, x0, states, controls, zones, rep.selected_zones)
    print(f"plot data written to {out}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="searchplan", description="UAV search-plan generation and checking")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="solve a scenario and write a verified plan")
    sp.add_argument("scenario")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG figures")
    _add_overrides(sp)
    sp.set_defaults(func=cmd_plan)

    sv = sub.add_parser("verify", help="check a trajectory against a scenario")
    sv.add_argument("scenario")
    sv.add_argument("trajectory")
    sv.add_argument("--out", help="write the report here instead of stdout")
    sv.set_defaults(func=cmd_verify)

    se = sub.add_parser("export-lp", help="write the planning program in LP format")
    se.add_argument("scenario")
    se.add_argument("out")
    _add_overrides(se)
    se.set_defaults(func=cmd_export_lp)

    sz = sub.add_parser("zones", help="write zone geometry as JSON")
    sz.add_argument("scenario")
    sz.add_argument("out", nargs="?")
    sz.set_defaults(func=cmd_zones)

    pd = sub.add_parser("plot-data", help="plot-ready series and figures from a plan directory")
    pd.add_argument("plan_dir")
    pd.add_argument("--out", help="output directory (default: the plan directory)")
    pd.add_argument("--no-figures", dest="figures", action="store_false")
    pd.set_defaults(func=cmd_plot_data)

    sl = sub.add_parser("list", help="list bundled scenarios")
    sl.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    level = os.environ.get("SEARCHPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"validation error {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ModelError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
