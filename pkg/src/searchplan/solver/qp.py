"""Convex QP relaxations of a MiqpModel under node-local bounds.

Each solve first shrinks the problem: fixed columns are substituted out,
rows that cannot be violated under the current bounds are dropped, and
binaries that only ever help a row by decreasing (or increasing) are fixed at
that bound. None of this changes the relaxation optimum. The reduced problem
goes to Clarabel's interior-point method.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

from ..model import MiqpModel

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-7
KKT_TOL = 1e-6
_ROW_TOL = 1e-9


class QPStatus:
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL = "numerical_error"


@dataclass
class QPResult:
    status: str
    values: np.ndarray | None
    objective: float
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    iterations: int = 0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == QPStatus.OPTIMAL


def _settings() -> clarabel.DefaultSettings:
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = 1e-9
    s.tol_gap_rel = 1e-10
    s.tol_feas = 1e-10
    s.tol_ktratio = 1e-8
    s.max_iter = 300
    return s


class RelaxationEngine:
    """Precomputed matrices for repeated relaxations of one model."""

    def __init__(self, model: MiqpModel):
        self.model = model
        A = model.A.tocsr()
        self.A = A
        self.Acsc = A.tocsc()
        self.A_pos = A.maximum(0).tocsr()
        self.A_neg = A.minimum(0).tocsr()
        self.pos_pattern = (self.A_pos != 0).astype(float).tocsc()
        self.neg_pattern = (self.A_neg != 0).astype(float).tocsc()
        self.eq_pattern = (A[model.is_eq] != 0).astype(float).tocsc()
        self.P = model.P.tocsc()
        p_nnz_cols = np.diff(self.P.indptr) > 0
        self.in_objective_quad = p_nnz_cols
        self.in_equality = np.asarray(self.eq_pattern.sum(axis=0)).ravel() > 0
        self.settings = _settings()

    # ---------------------------------------------------------------- presolve

    def _activity(self, lb, ub):
        lo = self.A_pos @ lb + self.A_neg @ ub
        hi = self.A_pos @ ub + self.A_neg @ lb
        return lo, hi

    def reduce(self, lb: np.ndarray, ub: np.ndarray):
        """Return (lb, ub, active_rows) after redundancy removal and dual fixing,
        or None when the bounds already prove infeasibility."""
        m = self.model
        lb, ub = lb.copy(), ub.copy()
        for _ in range(20):
            lo, hi = self._activity(lb, ub)
            scale = 1.0 + np.abs(m.rhs)
            if np.any(lo > m.rhs + _ROW_TOL * scale):
                return None
            if np.any(m.is_eq & (hi < m.rhs - _ROW_TOL * scale)):
                return None
            active = m.is_eq | (hi > m.rhs + _ROW_TOL * scale)
            ineq_active = (active & ~m.is_eq).astype(float)
            # Column locks from the active inequality rows.
            down = self.neg_pattern.T @ ineq_active > 0   # decreasing the column can violate a row
            up = self.pos_pattern.T @ ineq_active > 0     # increasing the column can violate a row
            free_bin = m.is_binary & (lb < ub)
            movable = free_bin & ~self.in_equality & ~self.in_objective_quad
            fix_lo = movable & ~down & (m.q >= 0)
            fix_hi = movable & ~up & (m.q <= 0) & ~fix_lo
            if not (fix_lo.any() or fix_hi.any()):
                return lb, ub, active
            ub[fix_lo] = lb[fix_lo]
            lb[fix_hi] = ub[fix_hi]
        return lb, ub, active

    # ---------------------------------------------------------------- solve

    def solve(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> QPResult:
        m = self.model
        lb = m.lb if lb is None else np.asarray(lb, dtype=float)
        ub = m.ub if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb > ub + 1e-12):
            return QPResult(QPStatus.INFEASIBLE, None, np.inf, reason="inconsistent bounds")
        red = self.reduce(lb, ub)
        if red is None:
            return QPResult(QPStatus.INFEASIBLE, None, np.inf, reason="row activity bounds")
        lb, ub, active = red
        fixed = lb >= ub
        free = ~fixed
        v = np.where(fixed, lb, 0.0)
        F = np.flatnonzero(free)
        rows = np.flatnonzero(active)

        if F.size == 0:
            viol = m.row_violations(v)
            if np.any(viol > PRIMAL_TOL):
                return QPResult(QPStatus.INFEASIBLE, None, np.inf, reason="all variables fixed")
            return QPResult(QPStatus.OPTIMAL, v, m.objective_value(v), float(viol.max(initial=0.0)), 0.0)

        A_rows = self.A[rows]
        A_f = A_rows[:, F]
        b_f = m.rhs[rows] - A_rows[:, np.flatnonzero(fixed)] @ v[fixed]
        eq = m.is_eq[rows]
        P_f = self.P[F][:, F]
        q_f = m.q[F] + self.P[F][:, np.flatnonzero(fixed)] @ v[fixed]

        lbF, ubF = lb[F], ub[F]
        has_ub, has_lb = np.isfinite(ubF), np.isfinite(lbF)
        n_f = F.size
        eye = sp.identity(n_f, format="csr")
        A_eq, b_eq = A_f[eq], b_f[eq]
        A_in, b_in = A_f[~eq], b_f[~eq]
        G = sp.vstack([A_eq, A_in, eye[has_ub], -eye[has_lb]], format="csc")
        h = np.concatenate([b_eq, b_in, ubF[has_ub], -lbF[has_lb]])
        cones = []
        if A_eq.shape[0]:
            cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
        n_ineq = G.shape[0] - A_eq.shape[0]
        if n_ineq:
            cones.append(clarabel.NonnegativeConeT(n_ineq))
        P_upper = sp.triu(P_f, format="csc")
        try:
            sol = clarabel.DefaultSolver(P_upper, q_f, G, h, cones, self.settings).solve()
        except Exception as exc:  # clarabel raises on malformed data only
            return QPResult(QPStatus.NUMERICAL, None, np.nan, reason=f"clarabel: {exc}")
        status = str(sol.status)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return QPResult(QPStatus.INFEASIBLE, None, np.inf, iterations=sol.iterations,
                            reason=status)
        xf = np.asarray(sol.x)
        v[F] = np.clip(xf, lbF, ubF)
        viol = float(np.max(m.row_violations(v), initial=0.0))
        zdual = np.asarray(sol.z)
        stat = P_f @ xf + q_f + G.T @ zdual
        dual_res = float(np.max(np.abs(stat), initial=0.0)) / (1.0 + float(np.max(np.abs(q_f), initial=0.0)))
        if status not in ("Solved", "AlmostSolved") or viol > PRIMAL_TOL or dual_res > KKT_TOL:
            log.debug("relaxation status %s primal %.3g dual %.3g", status, viol, dual_res)
            if viol > 1e-5 or status not in ("Solved", "AlmostSolved", "MaxIterations",
                                             "InsufficientProgress"):
                return QPResult(QPStatus.NUMERICAL, v, m.objective_value(v), viol, dual_res,
                                sol.iterations, reason=status)
        return QPResult(QPStatus.OPTIMAL, v, m.objective_value(v), viol, dual_res, sol.iterations, status)


def engine_for(model: MiqpModel) -> RelaxationEngine:
    eng = model._cache.get("engine")
    if eng is None:
        eng = model._cache["engine"] = RelaxationEngine(model)
    return eng


def solve_qp_relaxation(model: MiqpModel, lb=None, ub=None) -> QPResult:
    """Continuous relaxation (binaries in [0, 1] intersected with the given bounds)."""
    return engine_for(model).solve(lb, ub)
