"""Independent reference computations used by the tests.

None of these import the code under test beyond plain data containers, so an
agreement between an oracle and the package is evidence from two code paths.
"""
from __future__ import annotations

import itertools

import numpy as np


def dynamics_closed_form(x0, controls, mass, eta, dt, g=9.81):
    """States x_1..x_T from scalar per-axis sums.

    With f = 1 - eta and a_k = (dt/m)(u_k - u_g):
        v_t = f^t v_0 + sum_{k<t} f^(t-1-k) a_k
        p_t = p_0 + dt * sum_{s<t} v_s
    """
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(controls, dtype=float)
    T = len(u)
    f = 1.0 - eta
    hover = np.array([0.0, 0.0, mass * g])
    acc = (dt / mass) * (u - hover)
    t = np.arange(1, T + 1)[:, None]
    k = np.arange(T)[None, :]
    lag = t - 1 - k
    live = lag >= 0
    lagc = np.where(live, lag, 0)
    w_vel = np.where(live, f ** lagc, 0.0)
    if f != 1:
        geo = (1 - f ** t) / (1 - f)
        # sum_{s<t} v_s expanded: v_0 sum f^s + sum_k a_k sum_{s=k+1}^{t-1} f^(s-1-k)
        w_pos = np.where(live, (1 - f ** lagc) / (1 - f), 0.0)
    else:
        geo = t.astype(float)
        w_pos = np.where(live, lagc, 0).astype(float)
    out = np.empty((T, 6))
    out[:, 3:] = f ** t * x0[3:] + w_vel @ acc
    out[:, :3] = x0[:3] + dt * (geo * x0[3:] + w_pos @ acc)
    return out


def path_error_penalty(positions, goal) -> float:
    """sum_t |p_t - goal|^2 over t = 1..T."""
    d = np.asarray(positions, dtype=float) - np.asarray(goal, dtype=float)
    return float(np.sum(d * d))


def input_fluctuation_penalty(controls, u_prev=None) -> float:
    """sum_t |u_t - u_{t-1}|^2 over consecutive controls (and u_prev -> u_0 if given)."""
    u = np.asarray(controls, dtype=float)
    if u_prev is not None:
        u = np.vstack([np.asarray(u_prev, dtype=float), u])
    d = np.diff(u, axis=0)
    return float(np.sum(d * d))


def _qp_cvxopt(P, q, G, h, A, b):
    import cvxopt
    from cvxopt import solvers

    solvers.options.update(show_progress=False, abstol=1e-10, reltol=1e-10, feastol=1e-10,
                           maxiters=200)

    def m(a):
        return cvxopt.matrix(np.asarray(a, dtype=float))

    n = P.shape[0]
    args = [m(P + 1e-12 * np.eye(n)), m(q.reshape(-1, 1))]
    args += [m(G), m(h.reshape(-1, 1))] if G.shape[0] else [None, None]
    args += [m(A), m(b.reshape(-1, 1))] if A.shape[0] else [None, None]
    res = solvers.qp(*args)
    if res["status"] != "optimal":
        return None
    return float(res["primal objective"]), np.array(res["x"]).ravel()


def brute_force_miqp(model, max_binaries: int = 20):
    """Enumerate every 0/1 assignment of the model's binaries and solve the
    remaining convex QP with cvxopt; return (objective, values) or None.

    Assignments are first screened with a feasibility LP (scipy HiGHS) so the
    interior-point QP only runs on feasible ones.
    """
    from scipy.optimize import linprog

    n = model.n
    binv = np.flatnonzero(model.is_binary)
    if len(binv) > max_binaries:
        raise ValueError(f"{len(binv)} binaries exceed the enumeration budget")
    cont = np.flatnonzero(~model.is_binary)
    A = model.A.toarray()
    eq, rhs = model.is_eq, model.rhs
    P = model.P.toarray()
    q = model.q
    lb, ub = model.lb, model.ub
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(binv)):
        zb = np.array(bits)
        r = rhs - A[:, binv] @ zb
        Ac = A[:, cont]
        keep = np.any(Ac != 0, axis=1)
        # rows with no continuous part are pure checks on the binaries
        if np.any(r[~keep & ~eq] < -1e-9) or np.any(np.abs(r[~keep & eq]) > 1e-9):
            continue
        Aub, bub = Ac[keep & ~eq], r[keep & ~eq]
        Aeq, beq = Ac[keep & eq], r[keep & eq]
        bounds = list(zip(np.where(np.isfinite(lb[cont]), lb[cont], None),
                          np.where(np.isfinite(ub[cont]), ub[cont], None)))
        lp = linprog(np.zeros(len(cont)), A_ub=Aub if len(bub) else None, b_ub=bub if len(bub) else None,
                     A_eq=Aeq if len(beq) else None, b_eq=beq if len(beq) else None,
                     bounds=bounds, method="highs")
        if lp.status != 0:
            continue
        # objective restricted to the continuous block, binaries substituted
        Pcc = P[np.ix_(cont, cont)]
        qc = q[cont] + P[np.ix_(cont, binv)] @ zb
        const = model.const + q[binv] @ zb + 0.5 * zb @ P[np.ix_(binv, binv)] @ zb
        G_rows, h_rows = [Aub], [bub]
        for j, k in enumerate(cont):
            if np.isfinite(ub[k]):
                e = np.zeros(len(cont))
                e[j] = 1.0
                G_rows.append(e[None, :])
                h_rows.append([ub[k]])
            if np.isfinite(lb[k]):
                e = np.zeros(len(cont))
                e[j] = -1.0
                G_rows.append(e[None, :])
                h_rows.append([-lb[k]])
        G = np.vstack(G_rows)
        h = np.concatenate([np.asarray(x, dtype=float) for x in h_rows])
        sol = _qp_cvxopt(Pcc, qc, G, h, Aeq, beq)
        if sol is None:
            continue
        obj = sol[0] + const
        if best is None or obj < best[0]:
            v = np.zeros(n)
            v[binv] = zb
            v[cont] = sol[1]
            best = (obj, v)
    return best
