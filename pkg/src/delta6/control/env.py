"""Toy penalty-contact environments in the task frame.

Task axes: z points into the workpiece, so a tool pressing on a surface
feels a negative F_z.  The tool is treated as a point at the TCP; the peg
case works in configuration space, where the hole radius already has the
peg radius subtracted (``clearance`` is the radial play).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ContactEnvironment:
    kind: str = "height_field_surface"
    stiffness: float = 1e4           # N/m normal penalty
    damping: float = 2.0             # N·s/m normal; larger values chatter at dt = 1 ms
    friction: float = 0.3            # Coulomb coefficient
    slip_velocity: float = 1e-3      # m/s, friction regularisation
    # height field z_s(x, y) = -amplitude * sin(2 pi x / wavelength) * cos(2 pi y / wavelength)
    amplitude: float = 0.0
    wavelength: float = 0.2
    tool_radius: float = 0.03        # m, lever of the tilt torque
    tilt_scale: float = 0.02         # rad, misalignment at which the tilt torque saturates
    # peg/hole
    hole_center: tuple = (0.0, 0.0)
    clearance: float = 2e-4
    funnel: float = 5e-4             # radial width of the 45 degree entry chamfer
    depth: float = 0.015

    def __post_init__(self):
        if self.kind not in ("height_field_surface", "peg_hole"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.stiffness <= 0 or self.clearance <= 0:
            raise ValueError("stiffness and clearance must be positive")
        if self.wavelength <= 0 or self.depth <= 0 or self.funnel < 0:
            raise ValueError("geometry sizes must be positive")
        object.__setattr__(self, "hole_center", tuple(float(c) for c in self.hole_center))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ContactEnvironment":
        return cls(**d)

    # -- surface --------------------------------------------------------------

    def surface(self, x: float, y: float) -> tuple[float, float, float]:
        """Surface depth and its slopes (z_s, dz/dx, dz/dy) of the height field."""
        w = 2 * math.pi / self.wavelength
        sx, cx = math.sin(w * x), math.cos(w * x)
        sy, cy = math.sin(w * y), math.cos(w * y)
        A = self.amplitude
        return -A * sx * cy, -A * w * cx * cy, A * w * sx * sy

    def surface_tilt(self, x: float, y: float) -> np.ndarray:
        """(rx, ry) that align the tool axis with the inward surface normal."""
        _, gx, gy = self.surface(x, y)
        n = np.array([-gx, -gy, 1.0]) / math.sqrt(1 + gx * gx + gy * gy)
        return np.array([math.atan2(-n[1], n[2]), math.asin(n[0])])

    # -- contact --------------------------------------------------------------

    def wrench(self, X, Xdot) -> np.ndarray:
        """Contact wrench on the tool at the TCP, task axes."""
        if self.kind == "height_field_surface":
            return self._surface_wrench(np.asarray(X, float), np.asarray(Xdot, float))
        return self._peg_wrench(np.asarray(X, float), np.asarray(Xdot, float))

    def _friction(self, fn, v, normal) -> np.ndarray:
        vt = v - (v @ normal) * normal
        speed = np.linalg.norm(vt)
        if fn <= 0 or speed == 0:
            return np.zeros(3)
        return -self.friction * fn * vt / max(speed, self.slip_velocity)

    def _surface_wrench(self, X, V) -> np.ndarray:
        zs, gx, gy = self.surface(X[0], X[1])
        norm = math.sqrt(1 + gx * gx + gy * gy)
        n_out = np.array([gx, gy, -1.0]) / norm
        pen = (X[2] - zs) / norm
        W = np.zeros(6)
        if pen <= 0:
            return W
        rate = -(V[:3] @ n_out)
        fn = max(0.0, self.stiffness * pen + self.damping * rate)
        W[:3] = fn * n_out + self._friction(fn, V[:3], n_out)
        mis = X[3:5] - self.surface_tilt(X[0], X[1])
        W[3:5] = -fn * self.tool_radius * np.tanh(mis / self.tilt_scale)
        return W

    def _profile(self):
        """Boundary of the material in the (rho, z) half plane as segments."""
        c, f, D = self.clearance, self.funnel, self.depth
        far = 1.0
        return [((c + f, 0.0), (far, 0.0)),     # top face
                ((c, f), (c + f, 0.0)),         # chamfer
                ((c, D), (c, f)),               # wall
                ((0.0, D), (c, D))]             # bottom

    def inside(self, rho: float, z: float) -> bool:
        c, f, D = self.clearance, self.funnel, self.depth
        if rho < c:
            return z > D
        if rho < c + f:
            return z > c + f - rho
        return z > 0.0

    def _peg_wrench(self, X, V) -> np.ndarray:
        dx, dy = X[0] - self.hole_center[0], X[1] - self.hole_center[1]
        rho = math.hypot(dx, dy)
        z = X[2]
        W = np.zeros(6)
        if not self.inside(rho, z):
            return W
        best, point = math.inf, None
        for (r0, z0), (r1, z1) in self._profile():
            er, ez = r1 - r0, z1 - z0
            s = min(1.0, max(0.0, ((rho - r0) * er + (z - z0) * ez) / (er * er + ez * ez)))
            pr, pz = r0 + s * er, z0 + s * ez
            d = math.hypot(rho - pr, z - pz)
            if d < best:
                best, point = d, (pr, pz)
        if best == 0.0:
            return W
        # outward direction in (rho, z), mapped back to x, y
        nr, nz = (point[0] - rho) / best, (point[1] - z) / best
        radial = np.array([dx, dy]) / rho if rho > 1e-12 else np.zeros(2)
        n_out = np.array([nr * radial[0], nr * radial[1], nz])
        rate = -(V[:3] @ n_out)
        fn = max(0.0, self.stiffness * best + self.damping * rate)
        W[:3] = fn * n_out + self._friction(fn, V[:3], n_out)
        return W

    def captured(self, X) -> bool:
        """Peg axis within the chamfer catchment of the hole."""
        rho = math.hypot(X[0] - self.hole_center[0], X[1] - self.hole_center[1])
        return rho < self.clearance + self.funnel
