"""Cartesian impedance law with an outer PID force loop.

Poses are 6-vectors (x, y, z, rx, ry, rz) with intrinsic XYZ Euler
angles; wrenches are (Fx, Fy, Fz, Mx, My, Mz) expressed along the same
task axes at the TCP.  Every axis is decoupled.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np


def _six(v) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(v, dtype=float), (6,)))


def wrap_angle(a):
    """Map angles into (-pi, pi]; values already in range pass through unchanged."""
    a = np.asarray(a, dtype=float)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, np.pi - np.mod(np.pi - a, 2 * np.pi))


@dataclass(frozen=True)
class ImpedanceParams:
    M: tuple = (0.0,) * 6
    B: tuple = (25.0, 25.0, 25.0, 0.8, 0.8, 0.8)
    K: tuple = (500.0, 500.0, 1000.0, 10.0, 10.0, 10.0)
    # pose increment per wrench error per step; x, y and yaw follow the planners
    kp: tuple = (0.0, 0.0, 2e-4, 1e-2, 1e-2, 0.0)
    ki: tuple = (0.0, 0.0, 2e-5, 0.0, 0.0, 0.0)
    kd: tuple = (0.0,) * 6
    integrator_clamp: float = 5e-3
    w_ref: tuple = (0.0,) * 6
    f_limit: float = 20.0       # N, any force component
    m_limit: float = 0.5        # N·m, any moment component

    def __post_init__(self):
        for name in ("M", "B", "K", "kp", "ki", "kd", "w_ref"):
            object.__setattr__(self, name, tuple(float(x) for x in _six(getattr(self, name))))
        if min(self.B) <= 0 or min(self.K) <= 0:
            raise ValueError("B and K entries must be positive")
        if min(self.M) < 0:
            raise ValueError("M entries must be non-negative")
        if self.integrator_clamp <= 0:
            raise ValueError("integrator clamp must be positive")

    def with_(self, **kw) -> "ImpedanceParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ImpedanceParams":
        return cls(**d)


@dataclass
class ControlState:
    X: np.ndarray = field(default_factory=lambda: np.zeros(6))
    Xdot: np.ndarray = field(default_factory=lambda: np.zeros(6))
    X_d: np.ndarray = field(default_factory=lambda: np.zeros(6))
    integ: np.ndarray = field(default_factory=lambda: np.zeros(6))
    prev_err: np.ndarray | None = None
    phase: str = "idle"
    t: float = 0.0

    def copy(self) -> "ControlState":
        return ControlState(self.X.copy(), self.Xdot.copy(), self.X_d.copy(), self.integ.copy(),
                            None if self.prev_err is None else self.prev_err.copy(),
                            self.phase, self.t)


def impedance_step(state: ControlState, wrench, params: ImpedanceParams, dt: float) -> ControlState:
    """Advance ``M Xdd + B Xd + K (X - X_d) = W`` by ``dt`` with W held.

    Axes with M = 0 are first order and use the exact exponential update,
    which keeps the time constant B/K independent of ``dt``.  Axes with
    M > 0 use semi-implicit Euler.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    W = np.asarray(wrench, dtype=float)
    if W.shape != (6,) or not np.all(np.isfinite(W)):
        raise ValueError("wrench must be a finite 6-vector")
    M, B, K = (np.asarray(getattr(params, n)) for n in ("M", "B", "K"))
    e = state.X - state.X_d
    e[3:] = wrap_angle(e[3:])
    X = state.X.copy()
    V = state.Xdot.copy()
    first = M == 0
    if first.any():
        target = W[first] / K[first]
        decay = np.exp(-K[first] / B[first] * dt)
        e_new = target + (e[first] - target) * decay
        V[first] = (e_new - e[first]) / dt
        X[first] = state.X_d[first] + e_new
    second = ~first
    if second.any():
        acc = (W[second] - B[second] * V[second] - K[second] * e[second]) / M[second]
        V[second] = V[second] + dt * acc
        X[second] = X[second] + dt * V[second]
    X[3:] = wrap_angle(X[3:])
    out = state.copy()
    out.X, out.Xdot, out.t = X, V, state.t + dt
    return out


def pid_force_loop(state: ControlState, wrench, params: ImpedanceParams, dt: float,
                   w_ref=None) -> np.ndarray:
    """Pose increment from the wrench error; updates the integrator in place.

    ``err = W - W_ref``; the increment is ``kp*err + ki*sum(err*dt) +
    kd*(err - err_prev)/dt``, with the integral clamped elementwise so that
    its contribution never exceeds ``integrator_clamp``.
    """
    W = np.asarray(wrench, dtype=float)
    ref = np.asarray(params.w_ref if w_ref is None else w_ref, dtype=float)
    err = W - ref
    kp, ki, kd = (np.asarray(getattr(params, n)) for n in ("kp", "ki", "kd"))
    if np.any(ki):
        state.integ = state.integ + err * dt
        lim = np.where(ki > 0, params.integrator_clamp / np.where(ki > 0, ki, 1.0), 0.0)
        state.integ = np.clip(state.integ, -lim, lim)
    else:
        state.integ = np.zeros(6)
    d = np.zeros(6) if state.prev_err is None else (err - state.prev_err) / dt
    state.prev_err = err
    return kp * err + ki * state.integ + kd * d
