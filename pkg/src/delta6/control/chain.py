"""Frame chain from the robot base to the tool centre point."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import DesignParams, RigidTransform, euler_zxy_to_rot, fk_delta


@dataclass(frozen=True)
class Mounts:
    """Fixed transforms around the sensor.

    ``flange_to_base`` is M<-B (sensor base on the robot flange) and
    ``end_to_tcp`` is E<-T (tool offset on the end plate).
    """

    flange_to_base: RigidTransform = field(default_factory=lambda: RigidTransform.identity("B", "M"))
    end_to_tcp: RigidTransform = field(default_factory=lambda: RigidTransform.identity("T", "E"))

    @classmethod
    def with_tool(cls, length: float) -> "Mounts":
        """Straight tool of ``length`` metres along z of {E}."""
        return cls(end_to_tcp=RigidTransform(np.eye(3), [0.0, 0.0, length], "T", "E"))


def base_to_end(theta_e, params: DesignParams) -> RigidTransform:
    """B<-E from the six encoder deflections."""
    th = np.asarray(theta_e, dtype=float)
    P = fk_delta(th[:3] + params.theta_offset, params)
    R = euler_zxy_to_rot(th[5], th[3], th[4])
    return RigidTransform(R, P + np.array([0.0, 0.0, params.c]), "E", "B")


@dataclass(frozen=True)
class TcpPose:
    flange_to_tcp: RigidTransform        # M<-T
    global_to_tcp: RigidTransform | None  # G<-T, when a flange pose was given

    @property
    def X_flange(self) -> np.ndarray:
        return self.flange_to_tcp.as_pose6()

    @property
    def X_global(self) -> np.ndarray | None:
        return None if self.global_to_tcp is None else self.global_to_tcp.as_pose6()


def tcp_chain(theta_e, params: DesignParams, mounts: Mounts | None = None,
              flange_pose: RigidTransform | None = None) -> TcpPose:
    """M<-T = M<-B . B<-E(theta) . E<-T, optionally composed with G<-M."""
    mounts = mounts or Mounts()
    mt = mounts.flange_to_base @ base_to_end(theta_e, params) @ mounts.end_to_tcp
    gt = None if flange_pose is None else flange_pose @ mt
    return TcpPose(mt, gt)


def flange_command(global_to_tcp: RigidTransform, flange_to_tcp: RigidTransform) -> RigidTransform:
    """G<-M that places the TCP at ``global_to_tcp`` given the current chain."""
    return global_to_tcp @ flange_to_tcp.inverse()
