"""Branch-and-bound over convex QP relaxations.

Branching happens on "decision" binaries only: the cell occupancy, zone
selection, avoidance and goal indicators. The per-face indicators of cell
visits and goal membership are implied by their occupancy driver (a face
indicator can always be set equal to its driver without losing feasibility or
changing the objective), so they are snapped to the driver once every
decision binary is integral.

The interior-point relaxation returns the analytic center of a degenerate
optimal face, which leaves binaries that do not affect the objective at
fractional values. Before branching, the binaries are moved to a vertex of
the optimal face with the continuous part held fixed; the relaxation value is
unchanged.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..model import MiqpModel
from .options import Branching, NodeSelection, SolveOptions
from .heuristic import SequenceHeuristic
from .qp import QPResult, QPStatus, RelaxationEngine, engine_for

log = logging.getLogger(__name__)


class Status:
    OPTIMAL = "optimal"
    FEASIBLE_GAP = "feasible_gap"
    INFEASIBLE = "infeasible"
    LIMIT_HIT = "limit_hit"


@dataclass
class MipSolution:
    status: str
    values: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes_explored: int
    wall_time_s: float
    message: str = ""
    model: MiqpModel | None = field(default=None, repr=False)
    tree: list[dict] = field(default_factory=list, repr=False)
    incumbents: list[tuple[int, float]] = field(default_factory=list, repr=False)
    heuristic: bool = False

    @property
    def has_plan(self) -> bool:
        return self.values is not None and self.status in (Status.OPTIMAL, Status.FEASIBLE_GAP)

    @property
    def states(self) -> np.ndarray:
        return self.values[self.model.layout.x]

    @property
    def controls(self) -> np.ndarray:
        return self.values[self.model.layout.u]

    @property
    def binaries(self) -> np.ndarray:
        return np.round(self.values[self.model.is_binary]).astype(int)

    def selected_zones(self) -> list[int]:
        lay = self.model.layout
        if self.values is None or lay.zh.size == 0:
            return []
        return [int(i) for i in np.flatnonzero(self.values[lay.zh] > 0.5)]


@dataclass(eq=False)
class _Node:
    parent: "_Node | None"
    var: int
    val: float
    bound: float
    depth: int
    seq: int

    def fixings(self):
        node = self
        while node is not None and node.var >= 0:
            yield node.var, node.val
            node = node.parent


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def _vertex_binaries(model: MiqpModel, eng: RelaxationEngine, v: np.ndarray,
                     lb: np.ndarray, ub: np.ndarray, int_tol: float) -> np.ndarray:
    """Move binaries to a vertex of {b : (x_fixed, b) feasible} close to round(b)."""
    B = np.flatnonzero(model.is_binary & (lb < ub))
    if B.size == 0:
        return v
    frac = np.abs(v[B] - np.round(v[B]))
    if not np.any(frac > int_tol):
        return v
    A = eng.Acsc
    touch = np.flatnonzero(np.asarray(A[:, B].getnnz(axis=1)).ravel() > 0)
    if touch.size == 0:
        return v
    rest = np.ones(model.n, dtype=bool)
    rest[B] = False
    Ar = eng.A[touch]
    rhs = model.rhs[touch] - Ar[:, np.flatnonzero(rest)] @ v[rest]
    tol = 1e-7 + 1e-9 * np.abs(model.rhs[touch])
    AB = Ar[:, B]
    eq = model.is_eq[touch]
    import scipy.sparse as sp
    A_ub = sp.vstack([AB[~eq], AB[eq], -AB[eq]], format="csr")
    b_ub = np.concatenate([rhs[~eq] + tol[~eq], rhs[eq] + tol[eq], -rhs[eq] + tol[eq]])
    target = np.round(v[B])
    c = 1.0 - 2.0 * target
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=np.stack([lb[B], ub[B]], axis=1),
                  method="highs-ds")
    if res.status != 0:
        return v
    out = v.copy()
    out[B] = np.clip(res.x, lb[B], ub[B])
    return out


class BranchAndBound:
    def __init__(self, model: MiqpModel, opts: SolveOptions | None = None):
        self.model = model
        self.opts = opts or SolveOptions()
        self.eng = engine_for(model)
        self.decision = model.is_binary & (model.implied_by < 0)
        self.implied = np.flatnonzero(model.implied_by >= 0)
        self._seq = itertools.count()
        self.dive_solves = 0

    # ------------------------------------------------------------------ helpers

    def _bounds(self, node: _Node):
        lb, ub = self.model.lb.copy(), self.model.ub.copy()
        for j, val in node.fixings():
            lb[j] = ub[j] = val
        return lb, ub

    def _evaluate(self, node: _Node) -> tuple[QPResult, np.ndarray, np.ndarray]:
        lb, ub = self._bounds(node)
        return self.eng.solve(lb, ub), lb, ub

    def _select(self, v: np.ndarray, cols: np.ndarray) -> int | None:
        tol = self.opts.integer_tolerance
        frac = np.abs(v[cols] - np.round(v[cols]))
        cand = np.flatnonzero(frac > tol)
        if cand.size == 0:
            return None
        if self.opts.branching is Branching.FIRST_FRACTIONAL:
            return int(cols[cand[0]])
        score = np.minimum(v[cols[cand]], 1.0 - v[cols[cand]])
        best = np.flatnonzero(score >= score.max() - 1e-12)[0]  # lowest index on ties
        return int(cols[cand[best]])

    def _complete(self, v: np.ndarray) -> np.ndarray | None:
        """Round decision binaries, snap implied ones, re-solve the continuous part."""
        m = self.model
        w = v.copy()
        dec = np.flatnonzero(self.decision)
        w[dec] = np.round(w[dec])
        w[self.implied] = w[m.implied_by[self.implied]]
        lb, ub = m.lb.copy(), m.ub.copy()
        binv = np.flatnonzero(m.is_binary)
        lb[binv] = ub[binv] = w[binv]
        res = self.eng.solve(lb, ub)
        if not res.ok:
            return None
        if m.check(res.values, tol=1e-6, int_tol=self.opts.integer_tolerance):
            return None
        return res.values

    def _dive(self, lb: np.ndarray, ub: np.ndarray, deadline: float) -> np.ndarray | None:
        """Fix binaries one at a time until the relaxation is integral.

        Search and goal indicators go first: the largest fractional one is
        fixed to 1. Avoidance indicators follow, earliest step first: the face
        the relaxed position lies furthest outside of is chosen (its indicator
        fixed to 0). A fix that makes the relaxation infeasible is flipped; at
        most ``dive_backtracks`` flips are made before giving up.
        """
        lb, ub = lb.copy(), ub.copy()
        dec = np.flatnonzero(self.decision)
        eps_mask = np.zeros(self.model.n, dtype=bool)
        for e in self.model.layout.eps:
            eps_mask[e.ravel()] = True
        plain = dec[~eps_mask[dec]]
        tol = self.opts.integer_tolerance
        fixes: list[tuple[int, float, tuple]] = []
        flips = 0
        while time.perf_counter() < deadline:
            self.dive_solves += 1
            res = self.eng.solve(lb, ub)
            done = None
            if res.values is not None and res.status != QPStatus.INFEASIBLE:
                v = _vertex_binaries(self.model, self.eng, res.values, lb, ub, tol)
                frac = np.abs(v[plain] - np.round(v[plain])) > tol
                if frac.any():
                    cand = plain[frac]
                    j = int(cand[np.argmax(v[cand])])
                    lb[j] = ub[j] = 1.0
                    fixes.append((j, 1.0, ()))
                    continue
                pick = self._avoid_pick(v, lb, tol)
                if pick is not None:
                    # choosing a face makes the other faces of that step vacuous
                    j, others = pick
                    saved = (others, lb[others].copy(), ub[others].copy())
                    lb[others] = ub[others] = 1.0
                    lb[j] = ub[j] = 0.0
                    fixes.append((j, 0.0, saved))
                    continue
                done = self._complete(v)
                if done is not None:
                    return done
            if not fixes or flips >= self.opts.dive_backtracks:
                return None
            j, val, saved = fixes.pop()
            if saved:
                idx, lo, hi = saved
                lb[idx], ub[idx] = lo, hi
            lb[j] = ub[j] = 1.0 - val
            flips += 1
        return None

    def _avoid_pick(self, v, lb, tol):
        """(indicator to fix to 0, the other indicators of its step), or None when all are integral."""
        m = self.model
        planes = m.info.get("avoided_planes", [])
        P = m.layout.x[:, :3]
        for t in range(m.layout.T):
            for psi, eps in enumerate(m.layout.eps):
                g = eps[t]
                if np.all(np.abs(v[g] - np.round(v[g])) <= tol):
                    continue
                a, b = (np.asarray(z) for z in planes[psi])
                sep = a @ v[P[t]] - b
                # faces already excluded by a backtrack sit at lb = 1
                sep[lb[g] > 0.5] = -np.inf
                k = int(np.argmax(sep))
                if not np.isfinite(sep[k]):
                    continue
                return int(g[k]), np.delete(g, k)
        return None

    def _zone_choices(self):
        """Bounds fixing one zone per object, for every combination (capped)."""
        m = self.model
        groups = [m.layout.zh[o["zones"]] for o in m.info.get("objects", [])]
        if not groups:
            return [(m.lb, m.ub)]
        out = []
        for combo in itertools.islice(itertools.product(*groups), 16):
            lb, ub = m.lb.copy(), m.ub.copy()
            for g in groups:
                ub[g] = 0.0
            for j in combo:
                lb[j] = ub[j] = 1.0
            if self.eng.reduce(lb, ub) is not None:
                out.append((lb, ub))
        return out

    def _root_heuristics(self, deadline: float):
        choices = self._zone_choices()
        if self.model.layout.zt:
            found = SequenceHeuristic(self).run(choices, deadline)
            if found is not None:
                yield found
        for lb, ub in choices:
            found = self._dive(lb, ub, deadline)
            if found is not None:
                yield found

    # ------------------------------------------------------------------ main loop

    def solve(self) -> MipSolution:
        opts, m = self.opts, self.model
        t0 = time.perf_counter()
        root = _Node(None, -1, 0.0, -np.inf, 0, next(self._seq))
        depth_first = opts.node_selection is NodeSelection.DEPTH_FIRST
        heap: list = []
        stack: list[_Node] = []

        def push(node: _Node):
            if depth_first:
                stack.append(node)
            else:
                heapq.heappush(heap, (node.bound, node.seq, node))

        def pop() -> _Node:
            return stack.pop() if depth_first else heapq.heappop(heap)[2]

        def open_count() -> int:
            return len(stack) if depth_first else len(heap)

        push(root)
        inc_v, inc_obj = None, np.inf
        incumbents: list[tuple[int, float]] = []
        tree: list[dict] = []
        gap_pruned = np.inf
        nodes = 0
        root_msg = ""
        limit = ""
        pool = ThreadPoolExecutor(opts.workers) if opts.workers > 1 else None

        def threshold() -> float:
            return inc_obj - max(opts.absolute_gap, opts.relative_gap * max(1.0, abs(inc_obj)))

        try:
            while open_count():
                if opts.node_limit is not None and nodes >= opts.node_limit:
                    limit = f"node limit {opts.node_limit}"
                    break
                if opts.time_limit_s is not None and time.perf_counter() - t0 > opts.time_limit_s:
                    limit = f"time limit {opts.time_limit_s}s"
                    break
                batch = []
                while open_count() and len(batch) < opts.workers:
                    node = pop()
                    if node.bound >= threshold():
                        if node.bound < inc_obj:
                            gap_pruned = min(gap_pruned, node.bound)
                        continue
                    batch.append(node)
                if not batch:
                    break
                if pool is not None and len(batch) > 1:
                    results = list(pool.map(self._evaluate, batch))
                else:
                    results = [self._evaluate(n) for n in batch]
                for node, (res, lb, ub) in zip(batch, results):
                    nodes += 1
                    rec = {"id": node.seq, "parent": node.parent.seq if node.parent else None,
                           "depth": node.depth, "relaxation": res.objective, "status": res.status}
                    if opts.record_tree:
                        tree.append(rec)
                    if res.status == QPStatus.INFEASIBLE:
                        if node.parent is None:
                            root_msg = f"root relaxation infeasible ({res.reason})"
                        continue
                    if res.status == QPStatus.NUMERICAL and res.values is None:
                        log.warning("node %d: relaxation failed (%s); node dropped", node.seq, res.reason)
                        if node.parent is None:
                            root_msg = f"root relaxation failed ({res.reason})"
                        continue
                    bound = max(res.objective, node.bound)
                    rec["bound"] = bound
                    if bound >= threshold():
                        if bound < inc_obj:
                            gap_pruned = min(gap_pruned, bound)
                        continue
                    v = _vertex_binaries(m, self.eng, res.values, lb, ub, opts.integer_tolerance)
                    j = self._select(v, np.flatnonzero(self.decision))
                    if j is None:
                        done = self._complete(v)
                        if done is not None:
                            obj = m.objective_value(done)
                            if obj < inc_obj:
                                inc_v, inc_obj = done, obj
                                incumbents.append((nodes, obj))
                                log.info("node %d: incumbent %.6g (bound %.6g)", nodes, obj, bound)
                            continue
                        j = self._select(v, self.implied)
                        if j is None:
                            log.warning("node %d: integral relaxation failed the recheck; dropped", node.seq)
                            continue
                    if node.parent is None and opts.dive:
                        deadline = np.inf if opts.time_limit_s is None else t0 + opts.time_limit_s
                        for found in self._root_heuristics(deadline):
                            obj = m.objective_value(found)
                            if obj < inc_obj:
                                inc_v, inc_obj = found, obj
                                incumbents.append((nodes, obj))
                                log.info("heuristic incumbent %.6g", obj)
                    rec["branch"] = m.layout.names[j]
                    frac = v[j]
                    up_first = frac >= 0.5
                    kids = [(1.0, up_first), (0.0, not up_first)]
                    # depth-first pops the last push first
                    order = sorted(kids, key=lambda k: k[1], reverse=not depth_first)
                    for val, _ in order:
                        push(_Node(node, j, val, bound, node.depth + 1, next(self._seq)))
        finally:
            if pool is not None:
                pool.shutdown()

        wall = time.perf_counter() - t0
        open_bounds = [n.bound for n in stack] if depth_first else [b for b, _, _ in heap]
        best_bound = min([inc_obj, gap_pruned] + open_bounds)
        if inc_v is None:
            if limit:
                return MipSolution(Status.LIMIT_HIT, None, np.inf, best_bound, np.inf, nodes, wall,
                                   f"{limit} reached without a feasible solution", m, tree)
            return MipSolution(Status.INFEASIBLE, None, np.inf, np.inf, np.inf, nodes, wall,
                               root_msg or "every branch is infeasible", m, tree)
        gap = relative_gap(inc_obj, best_bound)
        abs_gap = inc_obj - best_bound
        closed = gap <= opts.relative_gap or abs_gap <= opts.absolute_gap
        status = Status.OPTIMAL if (not limit and closed) else Status.FEASIBLE_GAP
        msg = limit + " reached" if limit else ""
        return MipSolution(status, inc_v, inc_obj, best_bound, gap, nodes, wall, msg, m, tree, incumbents)


def branch_and_bound(model: MiqpModel, opts: SolveOptions | None = None) -> MipSolution:
    return BranchAndBound(model, opts).solve()
