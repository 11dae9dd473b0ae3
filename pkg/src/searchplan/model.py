"""Compile a scenario and its zones into a mixed-integer QP.

Variables are states x_1..x_T, controls u_0..u_{T-1} and the binary
indicator blocks of the search, avoidance and goal constraints. The objective
is

    w_time * sum_t |p_t - x_goal|^2 + w_energy * sum_{t>=1} |u_t - u_{t-1}|^2

stored as 1/2 v'Pv + q'v + const over the flat variable vector v.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import Cuboid, Plane
from .zoning import Zone

if TYPE_CHECKING:
    from .scenario import Scenario

L_FACES = 6
DEFAULT_M_MARGIN = 1.0

# Row families, used for reporting and for the row-by-row recheck.
ROW_FAMILIES = (
    "dynamics",      # x_t = Phi x_{t-1} + Gamma (u_{t-1} - u_g)
    "cube_face",     # alpha' p_t + M z <= M + b          (cell visit face indicator)
    "cube_all",      # L zt - sum_l z <= 0
    "cell_visit",    # -sum_t zt + zh <= 0                 (per cell)
    "zone_visit",    # -sum_t sum_c zt + |Z| zh <= 0       (per zone)
    "detection",     # -sum_i zh_i pd_i <= -Q
    "one_zone",      # sum_i zh_i <= 1
    "avoid_face",    # -alpha' p_t - M eps <= -b
    "avoid_any",     # sum_l eps <= L - 1
    "avoid_segment", # -alpha' p_{t-1} - M eps_t <= -b      (optional, keeps segments outside)
    "goal_face",     # alpha' p_t + M y <= M + b
    "goal_all",      # L yt - sum_l y <= 0
    "goal_window",   # -sum_{t>=tau} yt <= -1
)
_FAMILY = {name: i for i, name in enumerate(ROW_FAMILIES)}


class ModelError(ValueError):
    pass


def big_m(plane: Plane, workspace: Cuboid, margin: float = DEFAULT_M_MARGIN) -> float:
    """Smallest constant (plus margin) bounding |alpha'x - b| over the workspace."""
    vals = workspace.corners() @ plane.normal - plane.offset
    return float(np.max(np.abs(vals)) + margin)


def _big_m_rows(c: Cuboid, workspace: Cuboid, margin: float) -> np.ndarray:
    return np.array([big_m(p, workspace, margin) for p in c.planes])


@dataclass(frozen=True)
class BinaryCounts:
    z: int
    z_tilde: int
    z_hat: int
    eps: int
    y: int
    y_tilde: int
    worst_case: int

    @property
    def search(self) -> int:
        return self.z + self.z_tilde + self.z_hat

    @property
    def total(self) -> int:
        return self.search + self.eps + self.y + self.y_tilde


def count_binaries(T: int, zone_sizes: Sequence[int], n_avoided: int, has_goal: bool = True,
                   L: int = L_FACES) -> BinaryCounts:
    """Per-block binary counts; ``worst_case`` is T * |largest zone| * (L + 1)."""
    sizes = [int(s) for s in zone_sizes]
    cells = sum(sizes)
    return BinaryCounts(
        z=T * cells * L, z_tilde=T * cells, z_hat=len(sizes),
        eps=T * n_avoided * L,
        y=T * L if has_goal else 0, y_tilde=T if has_goal else 0,
        worst_case=T * max(sizes, default=0) * (L + 1),
    )


class VariableLayout:
    """Flat indexing of all decision variables.

    Blocks are integer index arrays: ``x[t-1, d]`` is x_t component d,
    ``u[t, d]`` is u_t, ``z[i][t-1, c, l]``, ``zt[i][t-1, c]``, ``zh[i]``,
    ``eps[psi][t-1, l]``, ``y[t-1, l]``, ``yt[t-1]``.
    """

    def __init__(self, T: int):
        if T < 1:
            raise ModelError("horizon must be at least 1")
        self.T = T
        self.names: list[str] = []
        self.binary: list[bool] = []
        self.blocks: dict[str, np.ndarray] = {}
        self.x = self.add("x", (T, 6), False, lambda t, d: f"x_{t + 1}_{d}")
        self.u = self.add("u", (T, 3), False, lambda t, d: f"u_{t}_{d}")
        self.z: list[np.ndarray] = []
        self.zt: list[np.ndarray] = []
        self.zh = np.zeros(0, dtype=int)
        self.eps: list[np.ndarray] = []
        self.y: np.ndarray | None = None
        self.yt: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.names)

    def add(self, key: str, shape: tuple[int, ...], binary: bool, namer) -> np.ndarray:
        if key in self.blocks:
            raise ModelError(f"duplicate block {key}")
        start = self.n
        idx = np.arange(start, start + int(np.prod(shape)), dtype=int).reshape(shape)
        for multi in np.ndindex(*shape):
            self.names.append(namer(*multi))
        self.binary.extend([binary] * idx.size)
        self.blocks[key] = idx
        return idx

    def block_of(self, j: int) -> str:
        for key, idx in self.blocks.items():
            if idx.size and idx.flat[0] <= j <= idx.flat[-1]:
                return key
        raise IndexError(j)


@dataclass
class MiqpModel:
    layout: VariableLayout
    P: sp.csc_matrix
    q: np.ndarray
    const: float
    A: sp.csr_matrix
    is_eq: np.ndarray
    rhs: np.ndarray
    family: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    implied_by: np.ndarray  # driver index for implied binaries, -1 otherwise
    x0: np.ndarray
    info: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective_value(self, v: np.ndarray) -> float:
        return float(0.5 * v @ (self.P @ v) + self.q @ v + self.const)

    def row_violations(self, v: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0) of the linear constraints at v."""
        act = self.A @ v - self.rhs
        return np.where(self.is_eq, np.abs(act), np.maximum(act, 0.0))

    def bound_violations(self, v: np.ndarray) -> np.ndarray:
        return np.maximum(np.maximum(self.lb - v, v - self.ub), 0.0)

    def check(self, v: np.ndarray, tol: float = 1e-6, int_tol: float = 1e-6) -> list[str]:
        """Row-by-row recheck; returns human-readable failures (empty when feasible)."""
        problems = []
        rv = self.row_violations(v)
        for r in np.flatnonzero(rv > tol)[:20]:
            problems.append(f"row {r} ({ROW_FAMILIES[self.family[r]]}) violated by {rv[r]:.3g}")
        bv = self.bound_violations(v)
        for j in np.flatnonzero(bv > tol)[:20]:
            problems.append(f"bound on {self.layout.names[j]} violated by {bv[j]:.3g}")
        b = v[self.is_binary]
        frac = np.abs(b - np.round(b))
        for k in np.flatnonzero(frac > int_tol)[:20]:
            j = np.flatnonzero(self.is_binary)[k]
            problems.append(f"binary {self.layout.names[j]} = {v[j]:.6g} is fractional")
        return problems

    def states(self, v: np.ndarray) -> np.ndarray:
        return v[self.layout.x]

    def controls(self, v: np.ndarray) -> np.ndarray:
        return v[self.layout.u]


class ModelBuilder:
    """Accumulates variables, rows and objective terms for one horizon."""

    def __init__(self, sc: Scenario, T: int | None = None, x0=None, big_m_margin: float = DEFAULT_M_MARGIN):
        self.sc = sc
        self.T = int(T if T is not None else sc.horizon)
        self.x0 = np.asarray(sc.start.vector if x0 is None else x0, dtype=float).reshape(6)
        self.margin = big_m_margin
        self.layout = VariableLayout(self.T)
        self._rows: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool, int]] = []
        self._P: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._q: dict[int, float] = {}
        self.const = 0.0
        self.info: dict = {"zones": [], "objects": [], "avoided": [], "goal_window": None}
        self._implied: list[tuple[np.ndarray, np.ndarray]] = []
        self._lb: dict[int, float] = {}
        self._ub: dict[int, float] = {}

    # rows are given as (cols[R, k], vals[R, k], rhs[R]); unused slots have val 0
    def rows(self, cols, vals, rhs, family: str, eq: bool = False) -> None:
        cols = np.atleast_2d(np.asarray(cols, dtype=int))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (cols.shape[0],))
        self._rows.append((cols, vals.copy(), rhs.copy(), None, eq, _FAMILY[family]))

    @property
    def p(self) -> np.ndarray:
        """Position indices, shape (T, 3)."""
        return self.layout.x[:, :3]

    # ------------------------------------------------------------------ blocks

    def add_dynamics(self) -> None:
        a = self.sc.agent
        T, x, u = self.T, self.layout.x, self.layout.u
        phi, gam, ug = a.phi, a.gamma, a.hover_force
        self.info["motion"] = {
            "dt": a.dt, "damping": a.damping,
            "accel_up": (a.gain * (np.asarray(a.u_max) - ug)).tolist(),
            "accel_down": (a.gain * (ug - np.asarray(a.u_min))).tolist(),
            "vmax_up": list(a.v_max), "vmax_down": (-np.asarray(a.v_min)).tolist(),
        }
        drive = -gam @ ug
        for t in range(T):
            for d in range(6):
                cols = [x[t, d]]
                vals = [1.0]
                rhs = drive[d]
                if t == 0:
                    rhs += phi[d] @ self.x0
                else:
                    nz = np.flatnonzero(phi[d])
                    cols += list(x[t - 1, nz])
                    vals += list(-phi[d, nz])
                nz = np.flatnonzero(gam[d])
                cols += list(u[t, nz])
                vals += list(-gam[d, nz])
                self.rows([cols], [vals], [rhs], "dynamics", eq=True)

    def add_bounds(self) -> None:
        a, ws = self.sc.agent, self.sc.workspace
        x, u = self.layout.x, self.layout.u
        for d in range(3):
            self._set_bounds(x[:, d], ws.lo[d], ws.hi[d])
            self._set_bounds(x[:, 3 + d], a.v_min[d], a.v_max[d])
            self._set_bounds(u[:, d], a.u_min[d], a.u_max[d])

    def _set_bounds(self, idx, lo, hi) -> None:
        for j in np.ravel(idx):
            self._lb[int(j)] = float(lo)
            self._ub[int(j)] = float(hi)

    def add_objective(self, u_prev=None) -> None:
        sc, T = self.sc, self.T
        w1, w2 = sc.weight_time, sc.weight_energy
        g = np.asarray(sc.x_goal, dtype=float)
        p, u = self.p, self.layout.u
        if w1 > 0:
            idx = p.ravel()
            self._P.append((idx, idx, np.full(idx.size, 2.0 * w1)))
            for t in range(T):
                for d in range(3):
                    self._addq(p[t, d], -2.0 * w1 * g[d])
            self.const += w1 * T * float(g @ g)
        if w2 > 0:
            # sum_t |u_t - u_{t-1}|^2 as a banded quadratic.
            for d in range(3):
                col = u[:, d]
                diag = np.full(T, 2.0 * w2 * 2.0)
                diag[0] = diag[-1] = 2.0 * w2
                if T == 1:
                    diag[:] = 0.0
                if u_prev is not None:
                    diag[0] += 2.0 * w2
                    self._addq(col[0], -2.0 * w2 * float(u_prev[d]))
                    self.const += w2 * float(u_prev[d]) ** 2
                self._P.append((col, col, diag))
                if T > 1:
                    off = np.full(T - 1, -2.0 * w2)
                    self._P.append((col[:-1], col[1:], off))
                    self._P.append((col[1:], col[:-1], off))

    def _addq(self, j, v) -> None:
        self._q[int(j)] = self._q.get(int(j), 0.0) + float(v)

    def _in_box_rows(self, box: Cuboid, ind: np.ndarray, family: str) -> None:
        """alpha_l' p_t + M_l ind[t, l] <= M_l + b_l for all t, l."""
        a, b = box.plane_matrix
        m = _big_m_rows(box, self.sc.workspace, self.margin)
        for l in range(L_FACES):
            axis = int(np.flatnonzero(a[l])[0])
            cols = np.stack([self.p[:, axis], ind[:, l]], axis=1)
            vals = np.array([a[l, axis], m[l]])
            self.rows(cols, vals, np.full(self.T, m[l] + b[l]), family)

    def add_search(self, zones: Sequence[Zone]) -> None:
        """Visit-every-cell rows for one selected zone per object of interest."""
        T, lay = self.T, self.layout
        by_object: dict[int, list[int]] = {}
        for i, zone in enumerate(zones):
            C = len(zone)
            z = lay.add(f"z{i}", (T, C, L_FACES), True,
                        lambda t, c, l, i=i: f"z_{t + 1}_{l}_{c}_{i}")
            zt = lay.add(f"zt{i}", (T, C), True, lambda t, c, i=i: f"zt_{t + 1}_{c}_{i}")
            lay.z.append(z)
            lay.zt.append(zt)
            self._implied.append((z, np.repeat(zt[:, :, None], L_FACES, axis=2)))
            by_object.setdefault(zone.object_index, []).append(i)
            self.info["zones"].append({"object": zone.object_index, "zone": zone.index,
                                       "pd": zone.pd, "cells": C, "model_index": i,
                                       "cube_centers": [c.interior_cube.center.tolist()
                                                        for c in zone.cells]})
        lay.zh = lay.add("zh", (len(zones),), True, lambda i: f"zh_{i}")

        for i, zone in enumerate(zones):
            z, zt = lay.z[i], lay.zt[i]
            C = len(zone)
            for c, cell in enumerate(zone.cells):
                self._in_box_rows(cell.interior_cube, z[:, c, :], "cube_face")
            # L zt - sum_l z <= 0
            cols = np.concatenate([zt.reshape(-1, 1), z.reshape(-1, L_FACES)], axis=1)
            vals = np.array([float(L_FACES)] + [-1.0] * L_FACES)
            self.rows(cols, vals, 0.0, "cube_all")
            # -sum_t zt_c + zh <= 0 per cell
            cols = np.concatenate([zt.T, np.full((C, 1), lay.zh[i])], axis=1)
            vals = np.array([-1.0] * T + [1.0])
            self.rows(cols, vals, 0.0, "cell_visit")
            # -sum_t sum_c zt + |Z| zh <= 0
            cols = np.concatenate([zt.ravel(), [lay.zh[i]]])[None, :]
            vals = np.concatenate([np.full(zt.size, -1.0), [float(C)]])[None, :]
            self.rows(cols, vals, 0.0, "zone_visit")

        q = self.sc.detection_requirement
        for k, idx in sorted(by_object.items()):
            pds = np.array([zones[i].pd for i in idx])
            self.rows([lay.zh[idx]], [-pds], [-q], "detection")
            self.rows([lay.zh[idx]], [np.ones(len(idx))], [1.0], "one_zone")
            self.info["objects"].append({"object": k, "zones": idx, "Q": q})

    def add_obstacles(self, boxes: Sequence[tuple[str, Cuboid]], segment_safe: bool = False) -> None:
        """Stay outside each box at every sample.

        With ``segment_safe`` the face that separates p_t from a box must also
        separate p_{t-1}, so the whole segment between samples stays outside.
        """
        T, lay = self.T, self.layout
        for psi, (label, box) in enumerate(boxes):
            eps = lay.add(f"eps{psi}", (T, L_FACES), True,
                          lambda t, l, psi=psi: f"eps_{t + 1}_{psi}_{l}")
            lay.eps.append(eps)
            a, b = box.plane_matrix
            m = _big_m_rows(box, self.sc.workspace, self.margin)
            for l in range(L_FACES):
                axis = int(np.flatnonzero(a[l])[0])
                cols = np.stack([self.p[:, axis], eps[:, l]], axis=1)
                self.rows(cols, np.array([-a[l, axis], -m[l]]), np.full(T, -b[l]), "avoid_face")
                if segment_safe:
                    # t = 1 uses the fixed start position, so its row has a single column
                    self.rows([[eps[0, l]]], [[-m[l]]], [-b[l] + a[l, axis] * self.x0[axis]],
                              "avoid_segment")
                    if T > 1:
                        cols = np.stack([self.p[:-1, axis], eps[1:, l]], axis=1)
                        self.rows(cols, np.array([-a[l, axis], -m[l]]), np.full(T - 1, -b[l]),
                                  "avoid_segment")
            self.rows(eps, np.ones(L_FACES), float(L_FACES - 1), "avoid_any")
            self.info["avoided"].append(label)
            self.info.setdefault("avoided_planes", []).append((a.tolist(), b.tolist()))

    def add_goal(self, region: Cuboid, window_start: int) -> None:
        T, lay = self.T, self.layout
        if not 1 <= window_start <= T:
            raise ModelError(f"goal window start {window_start} outside [1, {T}]")
        lay.y = lay.add("y", (T, L_FACES), True, lambda t, l: f"y_{t + 1}_{l}")
        lay.yt = lay.add("yt", (T,), True, lambda t: f"yt_{t + 1}")
        self._implied.append((lay.y, np.repeat(lay.yt[:, None], L_FACES, axis=1)))
        self._in_box_rows(region, lay.y, "goal_face")
        cols = np.concatenate([lay.yt.reshape(-1, 1), lay.y], axis=1)
        self.rows(cols, np.array([float(L_FACES)] + [-1.0] * L_FACES), 0.0, "goal_all")
        win = lay.yt[window_start - 1:]
        self.rows([win], [-np.ones(win.size)], [-1.0], "goal_window")
        self.info["goal_window"] = (window_start, T)
        self.info["goal_center"] = region.center.tolist()
        self.info["goal_dims"] = region.dims.tolist()

    # ------------------------------------------------------------------ finish

    def finish(self) -> MiqpModel:
        lay = self.layout
        n = lay.n
        ri, ci, vi, rhs, eq, fam = [], [], [], [], [], []
        r0 = 0
        for cols, vals, b, _, is_eq, f in self._rows:
            R, k = cols.shape
            keep = vals != 0.0
            rows_idx = np.repeat(np.arange(r0, r0 + R), k).reshape(R, k)
            ri.append(rows_idx[keep])
            ci.append(cols[keep])
            vi.append(vals[keep])
            rhs.append(b)
            eq.append(np.full(R, is_eq))
            fam.append(np.full(R, f))
            r0 += R
        A = sp.csr_matrix((np.concatenate(vi) if vi else [], (np.concatenate(ri) if ri else [],
                           np.concatenate(ci) if ci else [])), shape=(r0, n))
        A.sum_duplicates()
        if self._P:
            pr = np.concatenate([a for a, _, _ in self._P])
            pc = np.concatenate([b for _, b, _ in self._P])
            pv = np.concatenate([v for _, _, v in self._P])
            P = sp.csc_matrix((pv, (pr, pc)), shape=(n, n))
        else:
            P = sp.csc_matrix((n, n))
        P.sum_duplicates()
        P.eliminate_zeros()
        q = np.zeros(n)
        for j, v in self._q.items():
            q[j] = v
        is_binary = np.array(lay.binary, dtype=bool)
        lb = np.where(is_binary, 0.0, -np.inf)
        ub = np.where(is_binary, 1.0, np.inf)
        for j, v in self._lb.items():
            lb[j] = v
        for j, v in self._ub.items():
            ub[j] = v
        implied = np.full(n, -1, dtype=int)
        for dep, drv in self._implied:
            implied[dep.ravel()] = drv.ravel()
        info = dict(self.info)
        info["T"] = self.T
        return MiqpModel(lay, P, q, float(self.const), A,
                         np.concatenate(eq) if eq else np.zeros(0, bool),
                         np.concatenate(rhs) if rhs else np.zeros(0),
                         np.concatenate(fam) if fam else np.zeros(0, int),
                         lb, ub, is_binary, implied, self.x0.copy(), info)


def build(sc: Scenario, zones: Sequence[Zone] | None = None, big_m_margin: float = DEFAULT_M_MARGIN) -> MiqpModel:
    """The full planning program for ``sc`` over its horizon."""
    if zones is None:
        zones = sc.build_zones()
    if sc.objects:
        for k in range(len(sc.objects)):
            pds = [z.pd for z in zones if z.object_index == k]
            if not any(pd >= sc.detection_requirement for pd in pds):
                raise ModelError(f"object {k}: no zone meets Q={sc.detection_requirement}")
    for label, box in sc.avoided_parts():
        a, b = box.plane_matrix
        if np.all(a @ sc.start.position - b < 0):
            raise ModelError(f"start position lies inside {label}")
    mb = ModelBuilder(sc, big_m_margin=big_m_margin)
    mb.add_objective()
    mb.add_dynamics()
    mb.add_bounds()
    if zones:
        mb.add_search(zones)
    mb.add_obstacles(sc.avoided_parts(), sc.segment_safe_avoidance)
    if sc.goal is not None:
        mb.add_goal(sc.goal.region, sc.goal.window_start)
    return mb.finish()
