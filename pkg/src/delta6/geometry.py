"""Frames, rotations and delta-stage kinematics.

Everything here is SI (m, rad) and side-effect free.  Rotation helpers
return plain ``numpy`` arrays; :class:`RigidTransform` adds frame tags on
top so chains such as flange -> base -> end -> TCP can be checked.

Conventions
-----------
* Branch ``i`` (0-based in code) sits at angle ``phi[i]`` about the z axis
  of {B}; its proximal joint axis is the y axis of the branch frame {Bi}.
* ``theta_i`` is the absolute proximal angle; the encoder reads
  ``theta_e = theta - theta_offset`` on joints 1..3 and ``theta_e = theta``
  on joints 4..6.
* The elbow of branch ``i`` is at ``(a + l_a cos(theta)) u_i + l_a sin(theta) z``
  and the platform joint at ``P + b u_i``.
* The end-effector orientation is the intrinsic ZXY Euler triple
  ``(theta_e6, theta_e4, theta_e5)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_PHI = (0.0, TWO_PI / 3.0, 2.0 * TWO_PI / 3.0)
DEFAULT_QUANTUM = TWO_PI / 2**14
GIMBAL_TOL = 1e-9
KIN_TOL = 1e-9


class KinematicsError(ValueError):
    """Base class for kinematic failures."""


class Unreachable(KinematicsError):
    """The requested configuration cannot be assembled."""


class Singular(KinematicsError):
    """The configuration sits on a kinematic singularity."""


class GimbalLock(KinematicsError):
    """Euler decomposition is undefined at this rotation."""


class JointRangeError(ValueError):
    """An encoder deflection exceeds the spring range."""


@dataclass(frozen=True)
class DesignParams:
    """One Delta6 variant.

    Lengths in metres, angles in radians, ``k`` in N·m/rad.  ``k_joint``
    optionally overrides the stiffness of each of the six spring units; by
    default all six share ``k``.
    """

    a: float = 0.072
    b: float = 0.02124
    c: float = 0.030
    l_a: float = 0.040
    l_b: float = 0.120
    theta_offset: float = math.pi / 6
    k: float = 0.64
    phi: tuple[float, float, float] = DEFAULT_PHI
    encoder_quantum: float = DEFAULT_QUANTUM
    joint_range: float = math.pi / 6
    k_joint: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("a", "b", "c", "l_a", "l_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k!r}")
        if not self.l_b > self.l_a:
            raise ValueError("l_b must exceed l_a")
        if len(self.phi) != 3:
            raise ValueError("phi needs three branch angles")
        if not self.encoder_quantum > 0 or not self.joint_range > 0:
            raise ValueError("encoder_quantum and joint_range must be positive")
        object.__setattr__(self, "phi", tuple(float(p) for p in self.phi))
        if self.k_joint is not None:
            kj = tuple(float(v) for v in self.k_joint)
            if len(kj) != 6 or min(kj) <= 0:
                raise ValueError("k_joint needs six positive stiffnesses")
            object.__setattr__(self, "k_joint", kj)

    @property
    def stiffness(self) -> np.ndarray:
        """Per-joint spring stiffness, shape (6,)."""
        if self.k_joint is None:
            return np.full(6, self.k)
        return np.array(self.k_joint)

    def scaled(self, s: float) -> "DesignParams":
        """Uniformly scale every length by ``s``."""
        return replace(self, a=self.a * s, b=self.b * s, c=self.c * s,
                       l_a=self.l_a * s, l_b=self.l_b * s)

    def with_stiffness(self, k: float) -> "DesignParams":
        kj = None if self.k_joint is None else tuple(np.array(self.k_joint) * (k / self.k))
        return replace(self, k=k, k_joint=kj)

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["phi"] = list(self.phi)
        if self.k_joint is not None:
            d["k_joint"] = list(self.k_joint)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DesignParams":
        kw = dict(d)
        if "phi" in kw:
            kw["phi"] = tuple(kw["phi"])
        if kw.get("k_joint") is not None:
            kw["k_joint"] = tuple(kw["k_joint"])
        return cls(**kw)


def check_joint_range(theta_e, params: DesignParams) -> np.ndarray:
    """Return ``theta_e`` as an array, raising if any joint leaves the range."""
    th = np.asarray(theta_e, dtype=float)
    if th.shape[-1] != 6:
        raise ValueError(f"expected six encoder values, got shape {th.shape}")
    if not np.all(np.isfinite(th)):
        raise ValueError("encoder values must be finite")
    # small slack so a value sitting exactly on the limit survives round-off
    if np.any(np.abs(th) > params.joint_range * (1 + 1e-12)):
        raise JointRangeError(
            f"|theta_e| exceeds joint range {params.joint_range:.6f} rad")
    return th


# -- rotations ----------------------------------------------------------------

def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zxy_to_rot(z: float, x: float, y: float) -> np.ndarray:
    """Intrinsic Z-X-Y rotation ``Rz(z) @ Rx(x) @ Ry(y)``."""
    return rot_z(z) @ rot_x(x) @ rot_y(y)


def rot_to_euler_zxy(R) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zxy_to_rot`, valid for ``|x| < pi/2``."""
    R = np.asarray(R, dtype=float)
    sx = R[2, 1]
    if abs(sx) > 1.0 - GIMBAL_TOL:
        raise GimbalLock("ZXY decomposition undefined (|R[2,1]| ~ 1)")
    x = math.asin(sx)
    z = math.atan2(-R[0, 1], R[1, 1])
    y = math.atan2(-R[2, 0], R[2, 2])
    return z, x, y


def euler_zxy_to_rot_batch(z, x, y) -> np.ndarray:
    """Vectorised :func:`euler_zxy_to_rot`; returns shape (..., 3, 3)."""
    z, x, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(x, float),
                                  np.asarray(y, float))
    cz, sz, cx, sx, cy, sy = (np.cos(z), np.sin(z), np.cos(x), np.sin(x),
                              np.cos(y), np.sin(y))
    R = np.empty(z.shape + (3, 3))
    R[..., 0, 0] = cz * cy - sz * sx * sy
    R[..., 0, 1] = -sz * cx
    R[..., 0, 2] = cz * sy + sz * sx * cy
    R[..., 1, 0] = sz * cy + cz * sx * sy
    R[..., 1, 1] = cz * cx
    R[..., 1, 2] = sz * sy - cz * sx * cy
    R[..., 2, 0] = -cx * sy
    R[..., 2, 1] = sx
    R[..., 2, 2] = cx * cy
    return R


def euler_xyz_to_rot(rx: float, ry: float, rz: float) -> np.ndarray:
    """Intrinsic X-Y-Z rotation, used for the 6-vector pose form."""
    return rot_x(rx) @ rot_y(ry) @ rot_z(rz)


def rot_to_euler_xyz(R) -> tuple[float, float, float]:
    R = np.asarray(R, dtype=float)
    sy = R[0, 2]
    if abs(sy) > 1.0 - GIMBAL_TOL:
        raise GimbalLock("XYZ decomposition undefined (|R[0,2]| ~ 1)")
    ry = math.asin(sy)
    rx = math.atan2(-R[1, 2], R[2, 2])
    rz = math.atan2(-R[0, 1], R[0, 0])
    return rx, ry, rz


@dataclass(frozen=True)
class RigidTransform:
    """Homogeneous transform mapping coordinates in ``frame_from`` to ``frame_to``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame_from: str = ""
    frame_to: str = ""

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        p = np.array(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if (np.abs(R.T @ R - np.eye(3)).max() > 1e-9
                or abs(np.linalg.det(R) - 1.0) > 1e-9):
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls, frame_from: str = "", frame_to: str = "") -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), frame_from, frame_to)

    @classmethod
    def from_matrix(cls, T, frame_from: str = "", frame_to: str = "") -> "RigidTransform":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3], frame_from, frame_to)

    @classmethod
    def from_pose6(cls, X, frame_from: str = "", frame_to: str = "") -> "RigidTransform":
        """Translation plus intrinsic XYZ Euler angles."""
        X = np.asarray(X, dtype=float)
        return cls(euler_xyz_to_rot(*X[3:6]), X[:3], frame_from, frame_to)

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def as_pose6(self) -> np.ndarray:
        return np.concatenate([self.translation, rot_to_euler_xyz(self.rotation)])

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        # (to <- mid) @ (mid <- from)
        if self.frame_from and other.frame_to and self.frame_from != other.frame_to:
            raise ValueError(
                f"cannot chain {self.frame_to}<-{self.frame_from} with "
                f"{other.frame_to}<-{other.frame_from}")
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation,
                              other.frame_from, self.frame_to)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation, self.frame_to, self.frame_from)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, float) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class KinematicState:
    """Platform point P in {B} and the ZXY Euler triple of {E}."""

    P: np.ndarray
    euler_zxy: tuple[float, float, float]

    @classmethod
    def from_joints(cls, theta_e, params: DesignParams) -> "KinematicState":
        th = np.asarray(theta_e, float)
        P = fk_delta(th[:3] + params.theta_offset, params)
        return cls(P, (float(th[5]), float(th[3]), float(th[4])))


# -- delta stage kinematics ---------------------------------------------------

def _branch_axes(params: DesignParams):
    phi = np.asarray(params.phi)
    return np.cos(phi), np.sin(phi)


def sphere_centers(theta_123, params: DesignParams) -> np.ndarray:
    """Elbow points shifted inward by ``b``; the platform point P is at
    distance ``l_b`` from each of them.  Returns shape (..., 3, 3)."""
    th = np.asarray(theta_123, dtype=float)
    cphi, sphi = _branch_axes(params)
    r = (params.a - params.b) + params.l_a * np.cos(th)
    return np.stack([r * cphi, r * sphi, params.l_a * np.sin(th)], axis=-1)


def fk_delta_batch(theta_123, params: DesignParams, *, strict: bool = False):
    """Closed-form forward kinematics for many configurations.

    Returns ``(P, ok)`` where ``P`` has shape (N, 3) (NaN where
    unassemblable) and ``ok`` is a boolean mask.  The tool-side root is the
    one with the larger z.
    """
    th = np.atleast_2d(np.asarray(theta_123, dtype=float))
    C = sphere_centers(th, params)
    w = np.einsum("nij,nij->ni", C, C)
    A = 2.0 * (C[:, 1:] - C[:, :1])          # rows: eq2-eq1, eq3-eq1
    rhs = w[:, 1:] - w[:, :1]
    Axy = A[:, :, :2]
    det = Axy[:, 0, 0] * Axy[:, 1, 1] - Axy[:, 0, 1] * Axy[:, 1, 0]
    ok = np.abs(det) > 1e-15
    sdet = np.where(ok, det, 1.0)
    inv = np.empty_like(Axy)
    inv[:, 0, 0] = Axy[:, 1, 1] / sdet
    inv[:, 0, 1] = -Axy[:, 0, 1] / sdet
    inv[:, 1, 0] = -Axy[:, 1, 0] / sdet
    inv[:, 1, 1] = Axy[:, 0, 0] / sdet
    # x, y as affine functions of z: xy = p0 + p1 * z
    p0 = np.einsum("nij,nj->ni", inv, rhs)
    p1 = -np.einsum("nij,nj->ni", inv, A[:, :, 2])
    d0 = p0 - C[:, 0, :2]
    qa = np.einsum("ni,ni->n", p1, p1) + 1.0
    qb = 2.0 * (np.einsum("ni,ni->n", d0, p1) - C[:, 0, 2])
    qc = np.einsum("ni,ni->n", d0, d0) + C[:, 0, 2] ** 2 - params.l_b**2
    disc = qb * qb - 4.0 * qa * qc
    ok &= disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    singular = ok & (sq / (2.0 * qa) < KIN_TOL)
    z = (-qb + sq) / (2.0 * qa)
    P = np.concatenate([p0 + p1 * z[:, None], z[:, None]], axis=1)
    P[~ok] = np.nan
    if strict:
        if not ok.all():
            raise Unreachable("three-sphere system has no real intersection")
        if singular.any():
            raise Singular("forward-kinematics roots coincide")
    return P, ok & ~singular


def fk_delta(theta_123, params: DesignParams) -> np.ndarray:
    """Platform point P in {B} for absolute proximal angles ``theta_123``."""
    th = np.asarray(theta_123, dtype=float)
    if th.shape != (3,):
        raise ValueError("fk_delta expects three proximal angles")
    P, _ = fk_delta_batch(th[None], params, strict=True)
    return P[0]


def ik_delta(P, params: DesignParams) -> np.ndarray:
    """Absolute proximal angles that place the platform point at ``P``.

    Per branch, in {Bi}: ``Qx cos(t) + Qz sin(t) = D`` with
    ``Q = Rz(-phi_i) P + (b - a) x``.  The root taken is the one that
    ``fk_delta`` inverts (elbow on the outer side).
    """
    P = np.asarray(P, dtype=float).reshape(3)
    out = np.empty(3)
    for i, ph in enumerate(params.phi):
        c, s = math.cos(ph), math.sin(ph)
        qx = c * P[0] + s * P[1] + (params.b - params.a)
        qy = -s * P[0] + c * P[1]
        qz = P[2]
        rho = math.hypot(qx, qz)
        D = (qx * qx + qy * qy + qz * qz + params.l_a**2 - params.l_b**2) / (2 * params.l_a)
        if rho < KIN_TOL or abs(D) > rho:
            raise Unreachable(f"branch {i + 1} cannot reach P={P}")
        out[i] = math.atan2(qz, qx) - math.acos(D / rho)
    # wrap into (-pi, pi]
    return (out + math.pi) % TWO_PI - math.pi


def branch_rotation(i: int, params: DesignParams) -> np.ndarray:
    """Rotation taking {B} coordinates into {Bi}: ``Rz(-phi_i)``."""
    return rot_z(-params.phi[i])
