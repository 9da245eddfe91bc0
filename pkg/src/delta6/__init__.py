"""Software twin of the Delta6 compliant 6-DOF force/torque end-effector."""

__version__ = "0.1.0"
