"""Quasi-static wrench estimation from the six encoder deflections.

The estimator is exact statics of the ideal mechanism: each proximal spring
torque ``k * theta_e`` is carried by a two-force parallelogram linkage, the
three linkage forces sum to the platform force, and the three wrist spring
torques give the moment directly.  Result is expressed in the deflected
end frame {E}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import (DesignParams, check_joint_range, euler_zxy_to_rot,
                       fk_delta, rot_z)

SINGULAR_TOL = 1e-9
FRAMES = ("E", "E0", "T", "TCP", "B")


class SingularBranch(ArithmeticError):
    """A linkage is parallel to its proximal lever; the force is indeterminate."""


class FrameMismatch(ValueError):
    pass


class Degenerate(ValueError):
    pass


@dataclass(frozen=True)
class Wrench:
    """Force (N) and moment (N·m) expressed in a tagged frame."""

    force: np.ndarray
    moment: np.ndarray
    frame: str = "E"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")
        F = np.array(self.force, dtype=float).reshape(3)
        M = np.array(self.moment, dtype=float).reshape(3)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(M))):
            raise ValueError("wrench components must be finite")
        F.setflags(write=False)
        M.setflags(write=False)
        object.__setattr__(self, "force", F)
        object.__setattr__(self, "moment", M)

    @classmethod
    def from_vector(cls, w, frame: str = "E") -> "Wrench":
        w = np.asarray(w, dtype=float)
        return cls(w[:3], w[3:6], frame)

    @classmethod
    def zero(cls, frame: str = "E") -> "Wrench":
        return cls(np.zeros(3), np.zeros(3), frame)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    def _check(self, other: "Wrench"):
        if not isinstance(other, Wrench):
            return NotImplemented
        if other.frame != self.frame:
            raise FrameMismatch(f"cannot combine {self.frame} and {other.frame} wrenches")

    def __add__(self, other):
        self._check(other)
        return Wrench(self.force + other.force, self.moment + other.moment, self.frame)

    def __sub__(self, other):
        self._check(other)
        return Wrench(self.force - other.force, self.moment - other.moment, self.frame)

    def __mul__(self, s: float):
        return Wrench(self.force * s, self.moment * s, self.frame)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True)
class BranchState:
    """Intermediate quantities of one branch (index 0..2)."""

    index: int
    v: np.ndarray
    v_hat: np.ndarray
    v_hat_local: np.ndarray
    force: np.ndarray
    force_norm: float
    tau: float
    r: np.ndarray


@dataclass(frozen=True)
class SpringFit:
    """Least-squares spring characterisation.

    ``k`` is the slope through the origin; ``k_affine``/``intercept`` come
    from the affine fit, whose intercept flags a zero-offset error.
    """

    k: float
    mse: float
    mae: float
    sample_count: int
    k_affine: float
    intercept: float
    mse_affine: float
    mae_affine: float

    @property
    def valid(self) -> bool:
        return self.k > 0 and np.isfinite(self.k)


def branch_vector(i: int, theta_i: float, P, params: DesignParams) -> np.ndarray:
    """Linkage midline vector of branch ``i`` (0-based) in {B}."""
    if i not in (0, 1, 2):
        raise ValueError("branch index must be 0, 1 or 2")
    P = np.asarray(P, dtype=float)
    ph = params.phi[i]
    cp, sp = math.cos(ph), math.sin(ph)
    ct, st = math.cos(theta_i), math.sin(theta_i)
    ba = params.b - params.a
    return np.array([P[0] - params.l_a * ct * cp + ba * cp,
                     P[1] - params.l_a * ct * sp + ba * sp,
                     P[2] - params.l_a * st])


def branch_force(i: int, theta_e_i: float, v_hat_local, params: DesignParams,
                 theta_i: float | None = None):
    """Linkage force magnitude and vector (in {B}) for branch ``i``.

    ``v_hat_local`` is the unit linkage direction in {Bi}.  The spring
    torque ``k * theta_e`` must equal the y component of ``r x F``.
    """
    vl = np.asarray(v_hat_local, dtype=float)
    th = theta_e_i + params.theta_offset if theta_i is None else theta_i
    denom = params.l_a * (vl[0] * math.sin(th) - vl[2] * math.cos(th))
    if abs(denom) <= SINGULAR_TOL:
        raise SingularBranch(f"branch {i + 1}: lever parallel to linkage")
    tau = params.stiffness[i] * theta_e_i
    mag = tau / denom
    v_hat = rot_z(params.phi[i]) @ vl
    return mag, mag * v_hat


def branch_states(theta_e, params: DesignParams) -> list[BranchState]:
    th_e = check_joint_range(theta_e, params)
    th = th_e[:3] + params.theta_offset
    P = fk_delta(th, params)
    states = []
    for i in range(3):
        v = branch_vector(i, th[i], P, params)
        v_hat = v / params.l_b
        v_loc = rot_z(-params.phi[i]) @ v_hat
        mag, F = branch_force(i, th_e[i], v_loc, params)
        r = params.l_a * np.array([math.cos(th[i]), 0.0, math.sin(th[i])])
        states.append(BranchState(i, v, v_hat, v_loc, F, mag, params.stiffness[i] * th_e[i], r))
    return states


def estimate_wrench_e0(theta_e, params: DesignParams) -> Wrench:
    """Wrench in the neutral end frame {E0}, before the wrist rotation."""
    th_e = check_joint_range(theta_e, params)
    states = branch_states(th_e, params)
    F = -(states[0].force + states[1].force + states[2].force)
    M = params.stiffness[3:] * th_e[3:]
    return Wrench(F, M, "E0")


def end_rotation(theta_e) -> np.ndarray:
    """Rotation of {E} relative to {E0} from the wrist encoders."""
    return euler_zxy_to_rot(theta_e[5], theta_e[3], theta_e[4])


def estimate_wrench(theta_e, params: DesignParams) -> Wrench:
    """External wrench in {E} from six encoder deflections (rad)."""
    th_e = check_joint_range(theta_e, params)
    w0 = estimate_wrench_e0(th_e, params)
    Rt = end_rotation(th_e).T
    return Wrench(Rt @ w0.force, Rt @ w0.moment, "E")


def estimate_wrench_batch(theta_e, params: DesignParams, *, strict: bool = True,
                          backend: str | None = None) -> np.ndarray:
    """Vectorised estimator: (N, 6) encoder rows -> (N, 6) wrench rows in {E}.

    With ``strict`` any out-of-range, unreachable or singular row raises;
    otherwise such rows come back as NaN.
    """
    th = np.ascontiguousarray(np.atleast_2d(theta_e), dtype=float)
    if strict:
        check_joint_range(th, params)
    out, status = kernels.get(backend).wrench_batch(th, kernels.pack_params(params))
    if strict and status.any():
        code = int(status[status != 0][0])
        if code == kernels.STATUS_SINGULAR_BRANCH:
            raise SingularBranch("a linkage is parallel to its lever")
        from .geometry import Singular, Unreachable
        raise (Singular if code == kernels.STATUS_SINGULAR else Unreachable)(
            "configuration cannot be assembled")
    return out


def calibrate_spring(theta, tau) -> SpringFit:
    """Fit torque against deflection.

    Both a slope through the origin and an affine fit are computed; the
    residual statistics refer to each respective fit.
    """
    th = np.asarray(theta, dtype=float).ravel()
    tq = np.asarray(tau, dtype=float).ravel()
    if th.size != tq.size:
        raise ValueError("theta and tau must have the same length")
    if th.size < 2 or np.ptp(th) == 0.0:
        raise Degenerate("need at least two distinct angles")
    k = float(th @ tq / (th @ th))
    res = tq - k * th
    A = np.column_stack([th, np.ones_like(th)])
    (ka, c0), *_ = np.linalg.lstsq(A, tq, rcond=None)
    res_a = tq - (ka * th + c0)
    return SpringFit(k=k, mse=float(np.mean(res**2)), mae=float(np.mean(np.abs(res))),
                     sample_count=int(th.size), k_affine=float(ka), intercept=float(c0),
                     mse_affine=float(np.mean(res_a**2)),
                     mae_affine=float(np.mean(np.abs(res_a))))


def wrench_transform(w: Wrench, R, p, *, to_frame: str = "E") -> Wrench:
    """Re-express a wrench measured in {T} in {E}.

    ``R`` rotates {T} coordinates into {E}; ``p`` is the moment-reference
    shift expressed in {T}.
    """
    if w.frame != "T":
        raise FrameMismatch(f"wrench_transform expects a {{T}} wrench, got {w.frame}")
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    F = R @ w.force
    M = R @ (w.moment - np.cross(p, w.force))
    return Wrench(F, M, to_frame)


def wrench_transform_inverse(w: Wrench, R, p, *, from_frame: str = "E") -> Wrench:
    """Exact inverse of :func:`wrench_transform`."""
    if w.frame != from_frame:
        raise FrameMismatch(f"expected a {{{from_frame}}} wrench, got {w.frame}")
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    F = R.T @ w.force
    M = R.T @ w.moment + np.cross(p, F)
    return Wrench(F, M, "T")
