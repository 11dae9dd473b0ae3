"""Discrete-time point-mass model with gravity compensation and linear drag.

    position' = position + dt * velocity
    velocity' = (1 - eta) * velocity + (dt / m) * (u - [0, 0, m g])

These functions are unconstrained simulators. Force and velocity limits are
enforced by the planner, not here.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class AgentParams:
    mass: float = 3.35
    air_resistance: float = 0.2
    dt: float = 1.0
    u_min: tuple[float, float, float] = (-35.0, -35.0, -10.0)
    u_max: tuple[float, float, float] = (35.0, 35.0, 35.0)
    v_min: tuple[float, float, float] = (-15.0, -15.0, -15.0)
    v_max: tuple[float, float, float] = (15.0, 15.0, 15.0)
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("u_min", "u_max", "v_min", "v_max"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} must have 3 components")
            object.__setattr__(self, name, v)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.air_resistance < 1:
            raise ValueError("air_resistance must lie in [0, 1)")
        if any(lo >= hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError("force bounds need u_min < u_max on every axis")
        if any(lo >= hi for lo, hi in zip(self.v_min, self.v_max)):
            raise ValueError("velocity bounds need v_min < v_max on every axis")
        hover = self.mass * self.gravity
        if not self.u_min[2] <= hover <= self.u_max[2]:
            raise ValueError(f"hover force {hover:.4f} N lies outside the z force bounds")

    @property
    def damping(self) -> float:
        return 1.0 - self.air_resistance

    @property
    def gain(self) -> float:
        return self.dt / self.mass

    @cached_property
    def hover_force(self) -> np.ndarray:
        u = np.array([0.0, 0.0, self.mass * self.gravity])
        u.setflags(write=False)
        return u

    @cached_property
    def phi(self) -> np.ndarray:
        a = np.eye(6)
        a[0:3, 3:6] = self.dt * np.eye(3)
        a[3:6, 3:6] = self.damping * np.eye(3)
        a.setflags(write=False)
        return a

    @cached_property
    def gamma(self) -> np.ndarray:
        b = np.zeros((6, 3))
        b[3:6, :] = self.gain * np.eye(3)
        b.setflags(write=False)
        return b


@dataclass(frozen=True)
class State:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(3).copy()
            if not np.all(np.isfinite(a)):
                raise ValueError(f"state {name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(x[:3], x[3:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def _as_vector(x) -> np.ndarray:
    v = x.vector if isinstance(x, State) else np.asarray(x, dtype=float).reshape(6)
    if not np.all(np.isfinite(v)):
        raise ValueError("state must be finite")
    return v


def _as_controls(controls) -> np.ndarray:
    u = np.asarray(controls, dtype=float)
    if u.ndim == 1:
        u = u.reshape(1, 3)
    if u.ndim != 2 or u.shape[1] != 3:
        raise ValueError(f"controls must have shape (T, 3), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("controls must be finite")
    return u


def step(x, u, p: AgentParams) -> np.ndarray:
    """One application of the transition; returns the next 6-vector state."""
    xv = _as_vector(x)
    uv = _as_controls(u)[0]
    return p.phi @ xv + p.gamma @ (uv - p.hover_force)


def rollout(x0, controls, p: AgentParams) -> np.ndarray:
    """States x_1..x_T (shape (T, 6)) obtained by iterating ``step``."""
    u = _as_controls(controls)
    if len(u) == 0:
        raise ValueError("rollout needs at least one control")
    x = _as_vector(x0)
    out = np.empty((len(u), 6))
    for t, ut in enumerate(u):
        x = p.phi @ x + p.gamma @ (ut - p.hover_force)
        out[t] = x
    return out


def closed_form_states(x0, controls, p: AgentParams) -> np.ndarray:
    """All of x_1..x_T from x_t = Phi^t x_0 + sum_{k<t} Phi^k Gamma (u_{t-k-1} - u_g).

    Matrix powers are written out explicitly rather than iterated so this
    stays an independent path from ``rollout``.
    """
    u = _as_controls(controls)
    x = _as_vector(x0)
    T = len(u)
    if T == 0:
        raise ValueError("need at least one control")
    powers = _phi_powers(np.arange(T + 1), p)
    gains = powers[:T] @ p.gamma                      # Phi^k Gamma, k = 0..T-1
    du = u - p.hover_force
    t = np.arange(1, T + 1)[:, None]
    lag = t - 1 - np.arange(T)[None, :]                # k = t-1-j for control j
    live = lag >= 0
    kernel = np.where(live[:, :, None, None], gains[np.where(live, lag, 0)], 0.0)
    return powers[1:] @ x + np.einsum("tjil,jl->ti", kernel, du)


def closed_form_state(x0, controls, t: int, p: AgentParams) -> np.ndarray:
    """x_t alone; see ``closed_form_states``."""
    u = _as_controls(controls)
    if not 1 <= t <= len(u):
        raise ValueError(f"t must lie in [1, {len(u)}], got {t}")
    return closed_form_states(x0, u[:t], p)[t - 1]


def _phi_powers(ks: np.ndarray, p: AgentParams) -> np.ndarray:
    # Phi^k = [[I, dt*S_k I], [0, f^k I]] with S_k = sum_{j<k} f^j, stacked over ks.
    f = p.damping
    fk = f ** ks.astype(float)
    s = ks.astype(float) if f == 1.0 else (1.0 - fk) / (1.0 - f)
    out = np.zeros((len(ks), 6, 6))
    i = np.arange(3)
    out[:, i, i] = 1.0
    out[:, i, i + 3] = p.dt * s[:, None]
    out[:, i + 3, i + 3] = fk[:, None]
    return out
