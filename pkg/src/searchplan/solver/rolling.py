"""Rolling-horizon heuristic.

The zone of each object is fixed up front (the eligible zone with the fewest
cells). Its cells are ordered once by an open tour from the start. Each window
then solves an exact program over ``window`` steps that must visit the next
few unvisited cells of that order; the first ``window - overlap`` steps are
executed, cells entered during those steps are marked done, and the next
window starts from the last executed state with the last executed control as
the reference for the smoothness penalty. The goal constraint is imposed only
in the window that ends at the horizon.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time

import numpy as np

from ..geometry import contains
from ..model import ModelBuilder, MiqpModel, build
from ..zoning import Zone
from .bnb import MipSolution, Status, branch_and_bound
from .heuristic import TravelTime, _tours
from .options import Mode, SolveOptions

log = logging.getLogger(__name__)


class RollingHorizonError(RuntimeError):
    def __init__(self, window: int, message: str):
        self.window = window
        super().__init__(f"window {window}: {message}")


def choose_zones(sc, zones) -> dict[int, Zone]:
    out = {}
    for k in range(len(sc.objects)):
        cands = [z for z in zones if z.object_index == k and z.pd >= sc.detection_requirement]
        if not cands:
            raise RollingHorizonError(0, f"object {k}: no zone meets Q={sc.detection_requirement}")
        out[k] = min(cands, key=lambda z: (len(z), -z.pd, z.index))
    return out


def assignment_from_trajectory(model: MiqpModel, states: np.ndarray, controls: np.ndarray,
                               zone_choice: dict[int, int]) -> np.ndarray:
    """A full variable vector for ``model`` consistent with the given trajectory.

    Indicator values are read off the geometry: a cell indicator is on when
    the position lies in that cube, an avoidance indicator marks every face
    except one the position satisfies, the goal indicator is on inside the goal.
    """
    lay = model.layout
    v = np.zeros(model.n)
    v[lay.x] = states
    v[lay.u] = controls
    P = states[:, :3]
    A, rhs = model.A, model.rhs
    for i, info in enumerate(model.info["zones"]):
        on = zone_choice.get(info["object"]) == info["zone"]
        v[lay.zh[i]] = 1.0 if on else 0.0
        if not on:
            continue
        # a cell indicator may be on whenever all six in-box rows hold with it on
        z, zt = lay.z[i], lay.zt[i]
        for t in range(lay.T):
            for c in range(z.shape[1]):
                trial = v.copy()
                trial[z[t, c]] = 1.0
                trial[zt[t, c]] = 1.0
                rows = _rows_touching(model, z[t, c])
                if np.all(A[rows] @ trial <= rhs[rows] + 1e-9):
                    v[z[t, c]] = 1.0
                    v[zt[t, c]] = 1.0
    for eps in lay.eps:
        for t in range(lay.T):
            # face l is satisfied when its row holds with eps_l = 0
            ok = []
            for l in range(eps.shape[1]):
                r = _rows_touching(model, eps[t, l:l + 1])
                r = r[np.isin(model.family[r], [_family("avoid_face"), _family("avoid_segment")])]
                trial = v.copy()
                trial[eps[t]] = 1.0
                trial[eps[t, l]] = 0.0
                ok.append(bool(np.all(A[r] @ trial <= rhs[r] + 1e-9)))
            best = int(np.argmax(ok)) if any(ok) else 0
            v[eps[t]] = 1.0
            v[eps[t, best]] = 0.0
    if lay.yt is not None:
        for t in range(lay.T):
            trial = v.copy()
            trial[lay.y[t]] = 1.0
            trial[lay.yt[t]] = 1.0
            rows = _rows_touching(model, lay.y[t])
            rows = rows[model.family[rows] == _family("goal_face")]
            if np.all(A[rows] @ trial <= rhs[rows] + 1e-9):
                v[lay.y[t]] = 1.0
                v[lay.yt[t]] = 1.0
    return v


def _family(name: str) -> int:
    from ..model import ROW_FAMILIES
    return ROW_FAMILIES.index(name)


def _rows_touching(model: MiqpModel, cols) -> np.ndarray:
    cache = model._cache.setdefault("col_rows", None)
    if cache is None:
        cache = model._cache["col_rows"] = model.A.tocsc()
    cols = np.atleast_1d(np.asarray(cols))
    rows = np.concatenate([cache.indices[cache.indptr[j]:cache.indptr[j + 1]] for j in cols])
    return np.unique(rows)


def _sub_zone(zone: Zone, cells) -> Zone:
    return dataclasses.replace(zone, cells=tuple(cells))


def _window_model(sc, Tw: int, x, u_prev, sub, final: bool, t0: int) -> MiqpModel:
    mb = ModelBuilder(sc, T=Tw, x0=x)
    mb.add_objective(u_prev=u_prev)
    mb.add_dynamics()
    mb.add_bounds()
    if sub:
        mb.add_search(sub)
    mb.add_obstacles(sc.avoided_parts(), sc.segment_safe_avoidance)
    if final and sc.goal is not None:
        mb.add_goal(sc.goal.region, max(1, sc.goal.window_start - t0))
    return mb.finish()


def solve_rolling_horizon(sc, zones=None, opts: SolveOptions | None = None) -> MipSolution:
    opts = opts or sc.solver
    if opts.mode is not Mode.ROLLING_HORIZON:
        raise ValueError("solve_rolling_horizon needs mode=rolling_horizon")
    zones = sc.build_zones() if zones is None else list(zones)
    exact_opts = dataclasses.replace(opts, mode=Mode.EXACT, window=None, overlap=0)
    T = sc.horizon
    if opts.window >= T:
        return branch_and_bound(build(sc, zones), exact_opts)

    t_start = time.perf_counter()
    chosen = choose_zones(sc, zones)
    x = np.asarray(sc.start.vector, dtype=float)
    remaining: dict[int, list] = {}
    goal = sc.goal.region.center if sc.goal is not None else None
    for k, zone in chosen.items():
        probe = ModelBuilder(sc, T=1)
        probe.add_dynamics()
        cost = TravelTime(probe.info["motion"])
        pts = np.array([c.interior_cube.center for c in zone.cells])
        # cruise times: between windows the agent keeps its speed
        order = _tours(x[:3], pts, goal, cost.cruise)[0]
        remaining[k] = [zone.cells[i] for i in order]

    states, controls = [], []
    u_prev = None
    t0, w = 0, 0
    nodes = 0
    step = opts.window - opts.overlap
    while t0 < T:
        w += 1
        Tw = min(opts.window, T - t0)
        final = t0 + Tw == T
        n_left = 1 if final else 1 + math.ceil((T - t0 - Tw) / step)
        base = {}
        for k in chosen:
            need = len(remaining[k])
            if not final:
                # one extra cell when overlapping, since visits in the overlap are not kept
                need = min(need, math.ceil(need / n_left) + (1 if opts.overlap else 0))
            base[k] = need
        # a window that cannot reach its share of cells retries with fewer (at
        # least one while any remain); the final window must take everything left
        sol, cut = None, 0
        while True:
            need = {k: max(min(n, 1), n - cut) if not final else n for k, n in base.items()}
            sub = [_sub_zone(chosen[k], remaining[k][:n]) for k, n in need.items() if n]
            model = _window_model(sc, Tw, x, u_prev, sub, final, t0)
            sol = branch_and_bound(model, exact_opts)
            nodes += sol.nodes_explored
            if sol.has_plan or final or all(n <= 1 for n in need.values()):
                break
            cut += 1
            log.info("window %d: retrying with %d fewer cells", w, cut)
        if not sol.has_plan:
            msg = f"no plan ({sol.status}: {sol.message})"
            log.warning("rolling horizon window %d starting at t=%d: %s", w, t0, msg)
            return MipSolution(Status.INFEASIBLE if sol.status == Status.INFEASIBLE else Status.LIMIT_HIT,
                               None, np.inf, -np.inf, np.inf, nodes, time.perf_counter() - t_start,
                               f"window {w} (t={t0}): {msg}", None, heuristic=True)
        n_exec = Tw if final else step
        xs, us = sol.states[:n_exec], sol.controls[:n_exec]
        states.append(xs)
        controls.append(us)
        for k in remaining:
            remaining[k] = [c for c in remaining[k]
                            if not any(contains(c.interior_cube, p) for p in xs[:, :3])]
        x = xs[-1].copy()
        u_prev = us[-1].copy()
        t0 += n_exec
        log.info("window %d done: t=%d, cells left %s", w, t0, {k: len(r) for k, r in remaining.items()})

    if any(remaining.values()):
        return MipSolution(Status.INFEASIBLE, None, np.inf, -np.inf, np.inf, nodes,
                           time.perf_counter() - t_start, "cells left unvisited at the horizon",
                           None, heuristic=True)
    full = build(sc, zones)
    S, U = np.vstack(states), np.vstack(controls)
    v = assignment_from_trajectory(full, S, U, {k: z.index for k, z in chosen.items()})
    problems = full.check(v, tol=1e-6, int_tol=opts.integer_tolerance)
    if problems:
        raise RollingHorizonError(w, f"stitched plan fails the full-model recheck: {problems[:3]}")
    return MipSolution(Status.FEASIBLE_GAP, v, full.objective_value(v), -np.inf, np.inf, nodes,
                       time.perf_counter() - t_start, "rolling-horizon heuristic; not certified",
                       full, heuristic=True)
