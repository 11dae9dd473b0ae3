"""Incumbent construction from a visiting sequence.

The big-M relaxation says little about *when* a cell can be visited, so the
tree search alone rarely finds a first feasible plan on instances with more
than a few cells. This heuristic fixes the combinatorial skeleton directly:
an order over the interior cubes (nearest neighbour, then 2-opt), visit times
from steady-state travel times stretched to several horizons, and a goal time after the last
visit. Only the avoidance indicators are left for a short dive. The best
result is then improved by shifting single visit times.
"""
from __future__ import annotations

import logging
import time

import numpy as np

log = logging.getLogger(__name__)

class TravelTime:
    """Steps needed to cover a displacement starting from rest.

    Each axis is simulated on its own at full thrust towards the target under
    the damped dynamics and velocity bounds; the slowest axis decides.
    """

    def __init__(self, motion: dict):
        self.dt = float(motion["dt"])
        self.f = float(motion["damping"])
        self.acc = (np.asarray(motion["accel_up"]), np.asarray(motion["accel_down"]))
        self.vmax = (np.asarray(motion["vmax_up"]), np.asarray(motion["vmax_down"]))
        self._cache: dict = {}

    def _axis(self, dist: float, acc: float, vmax: float) -> float:
        key = (round(dist, 6), acc, vmax)
        if key in self._cache:
            return self._cache[key]
        x, v, n = 0.0, 0.0, 0
        while x < dist and n < 10_000:
            x += self.dt * v
            v = min(vmax, self.f * v + acc)
            n += 1
            if acc <= 0 and v <= 0:
                n = 10_000
        self._cache[key] = float(n)
        return float(n)

    def cruise(self, a, b) -> float:
        """Steps at terminal speed, ignoring acceleration; the slowest axis decides."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        steps = 0.0
        for k in range(3):
            side = 0 if d[k] > 0 else 1
            acc = self.acc[side][k]
            vt = self.vmax[side][k] if self.f >= 1 else min(self.vmax[side][k], acc / (1 - self.f))
            if abs(d[k]) > 0:
                steps = max(steps, abs(d[k]) / (vt * self.dt) if vt > 0 else np.inf)
        return steps

    def __call__(self, a, b, slack=0.0) -> float:
        """``slack`` (scalar or per axis) is how far from ``b`` still counts as arrived."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        slack = np.broadcast_to(np.asarray(slack, dtype=float), (3,))
        steps = 0.0
        for k in range(3):
            if abs(d[k]) <= slack[k]:
                continue
            side = 0 if d[k] > 0 else 1
            steps = max(steps, self._axis(abs(d[k]) - slack[k], self.acc[side][k], self.vmax[side][k]))
        return steps


def _tours(start: np.ndarray, pts: np.ndarray, end: np.ndarray | None, cost) -> list[list[int]]:
    """Open tours start -> all pts (-> end): 2-opt improved, then plain nearest neighbour."""
    n = len(pts)
    left = list(range(n))
    order = []
    cur = start
    while left:
        d = [cost(cur, pts[k]) + 1e-6 * np.linalg.norm(pts[k] - cur) for k in left]
        k = left.pop(int(np.argmin(d)))
        order.append(k)
        cur = pts[k]
    nn = list(order)

    def length(o):
        path = [start] + [pts[k] for k in o] + ([end] if end is not None else [])
        return sum(cost(path[i], path[i + 1]) for i in range(len(path) - 1))

    best = length(order)
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                cand = order[:i] + order[i:j + 1][::-1] + order[j + 1:]
                val = length(cand)
                if val < best - 1e-9:
                    order, best, improved = cand, val, True
    return [order] if order == nn else [order, nn]


def _schedules(start, waypoints, cost, T, last_min, slacks=None):
    """Candidate visit-time lists: full-speed travel times stretched by
    several factors, from filling the whole horizon down to near full speed."""
    cum, cur, acc = [], start, 0.0
    slacks = slacks or [0.0] * len(waypoints)
    for w, sl in zip(waypoints, slacks):
        acc += max(cost(cur, w, sl), 1e-9)
        cum.append(acc)
        cur = w
    if not cum:
        return []
    stretch_max = T / cum[-1]
    out = []
    for f in (1.0, 0.85, 0.7, 0.55, 0.4):
        s = stretch_max * f
        if s < 0.5:  # from-rest travel times overestimate; allow some compression
            break
        times, prev = [], 0
        for c in cum:
            prev = max(prev + 1, int(np.ceil(c * s - 1e-9)))
            times.append(prev)
        if times[-1] > T:
            continue
        if last_min is not None and times[-1] < last_min:
            times[-1] = last_min
        if times not in out:
            out.append(times)
    return out


class SequenceHeuristic:
    def __init__(self, bb):
        self.bb = bb
        self.m = bb.model
        self.lay = bb.model.layout

    def _bounds(self, base_lb, base_ub, zone_ids, seq, times):
        m, lay = self.m, self.lay
        lb, ub = base_lb.copy(), base_ub.copy()
        for i in range(len(lay.zt)):
            ub[lay.zt[i]] = 0.0
            lb[lay.zt[i]] = 0.0
        if lay.yt is not None:
            lb[lay.yt] = ub[lay.yt] = 0.0
        for item, t in zip(seq, times):
            if item[0] == "cell":
                j = lay.zt[item[1]][t - 1, item[2]]
            else:
                j = lay.yt[t - 1]
            lb[j] = ub[j] = 1.0
        dep = np.flatnonzero(m.implied_by >= 0)
        drv = m.implied_by[dep]
        fixed = lb[drv] == ub[drv]
        lb[dep[fixed]] = ub[dep[fixed]] = lb[drv[fixed]]
        return lb, ub

    def _evaluate(self, base, zone_ids, seq, times, deadline, warm=None):
        lb, ub = self._bounds(*base, zone_ids, seq, times)
        if warm is not None:
            # try the previous avoidance pattern first: a single QP solve
            eps = np.concatenate([e.ravel() for e in self.lay.eps]) if self.lay.eps else np.zeros(0, int)
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[eps] = ub2[eps] = np.round(warm[eps])
            res = self.bb.eng.solve(lb2, ub2)
            self.bb.dive_solves += 1
            if res.ok and not self.m.check(res.values, tol=1e-6, int_tol=self.bb.opts.integer_tolerance):
                return res.values
            return None
        return self.bb._dive(lb, ub, deadline)

    def run(self, zone_choices, deadline: float):
        m, lay = self.m, self.lay
        T = lay.T
        x0 = m.x0[:3]
        cost = TravelTime(m.info["motion"])
        goal = np.asarray(m.info["goal_center"]) if "goal_center" in m.info else None
        goal_slack = 0.4 * np.asarray(m.info.get("goal_dims", np.zeros(3)))
        tau = m.info["goal_window"][0] if m.info.get("goal_window") else None
        best_v, best_obj = None, np.inf
        for base_lb, base_ub in zone_choices:
            if time.perf_counter() > deadline:
                break
            zone_ids = [i for i in range(len(lay.zt)) if base_lb[lay.zh[i]] > 0.5]
            items, pts = [], []
            for i in zone_ids:
                for c, ctr in enumerate(m.info["zones"][i]["cube_centers"]):
                    items.append(("cell", i, c))
                    pts.append(np.asarray(ctr))
            pts = np.array(pts).reshape(-1, 3)
            local_best = None
            for order in _tours(x0, pts, goal, cost):
                seq = [items[k] for k in order]
                wps = [pts[k] for k in order]
                slacks = [0.0] * len(wps)
                if goal is not None:
                    seq.append(("goal",))
                    wps.append(goal)
                    slacks.append(goal_slack)
                if len(seq) > T:
                    continue
                for times in _schedules(x0, wps, cost, T, tau if goal is not None else None, slacks):
                    v = self._evaluate((base_lb, base_ub), zone_ids, seq, times, deadline)
                    if v is not None:
                        obj = m.objective_value(v)
                        if local_best is None or obj < local_best[0]:
                            local_best = (obj, seq, times, v)
            if local_best is None:
                log.info("sequence heuristic: no plan for zones %s", zone_ids)
                continue
            obj, seq, times, v = local_best
            obj, times, v = self._improve((base_lb, base_ub), zone_ids, seq, obj, times, v, deadline, tau)
            log.info("sequence heuristic: zones %s objective %.6g", zone_ids, obj)
            if obj < best_obj:
                best_v, best_obj = v, obj
        return best_v

    def _improve(self, base, zone_ids, seq, obj, times, v, deadline, tau, passes: int = 4):
        T = self.lay.T
        for _ in range(passes):
            changed = False
            for k in range(len(times)):
                for delta in (-1, 1, -2, 2):
                    if time.perf_counter() > deadline:
                        return obj, times, v
                    cand = list(times)
                    cand[k] += delta
                    lo = cand[k - 1] + 1 if k > 0 else 1
                    hi = cand[k + 1] - 1 if k + 1 < len(cand) else T
                    if seq[k][0] == "goal" and tau is not None:
                        lo = max(lo, tau)
                    if not lo <= cand[k] <= hi:
                        continue
                    w = self._evaluate(base, zone_ids, seq, cand, deadline, warm=v)
                    if w is None:
                        continue
                    val = self.m.objective_value(w)
                    if val < obj - 1e-9 * max(1.0, abs(obj)):
                        obj, times, v, changed = val, cand, w, True
                        break
            if not changed:
                break
        return obj, times, v
