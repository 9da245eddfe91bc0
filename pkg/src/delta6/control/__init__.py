"""Hybrid force-impedance control and toy contact tasks."""
from .chain import Mounts, TcpPose, base_to_end, flange_command, tcp_chain
from .env import ContactEnvironment
from .law import ControlState, ImpedanceParams, impedance_step, pid_force_loop, wrap_angle
from .planners import plan_spiral, plan_zigzag
from .tasks import (TRACE_COLUMNS, Delta6Sensor, LimitBreach, TaskConfig, TaskFailure, TaskReport,
                    Timeout, run_buffing, run_peg_in_hole, run_task)

__all__ = [
    "Mounts", "TcpPose", "base_to_end", "flange_command", "tcp_chain",
    "ContactEnvironment",
    "ControlState", "ImpedanceParams", "impedance_step", "pid_force_loop", "wrap_angle",
    "plan_spiral", "plan_zigzag",
    "TRACE_COLUMNS", "Delta6Sensor", "LimitBreach", "TaskConfig", "TaskFailure", "TaskReport",
    "Timeout", "run_buffing", "run_peg_in_hole", "run_task",
]
