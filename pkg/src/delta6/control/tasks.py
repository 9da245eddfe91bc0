"""Closed-loop toy tasks: surface buffing and peg-in-hole search.

The robot is assumed to track flange commands exactly, so the TCP sits at
the impedance state X.  The contact wrench is pushed through the sensor
model (inverse statics, encoder quantisation, analytic estimate) before
the controller sees it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import kernels
from ..estimator import Wrench, wrench_transform, wrench_transform_inverse
from ..geometry import DesignParams, RigidTransform, euler_xyz_to_rot
from .chain import Mounts, flange_command, tcp_chain
from .env import ContactEnvironment
from .law import ControlState, ImpedanceParams, impedance_step, pid_force_loop
from .planners import plan_spiral, plan_zigzag


class TaskFailure(RuntimeError):
    pass


class LimitBreach(TaskFailure):
    """Measured wrench exceeded the global limits."""


class Timeout(TaskFailure):
    pass


class Delta6Sensor:
    """Wrench at the TCP -> encoder deflections -> analytic estimate at the TCP.

    Deflections are found by a quasi-Newton iteration with the Jacobian
    frozen at the neutral pose, warm-started from the previous solution.
    """

    def __init__(self, params: DesignParams | None = None, mounts: Mounts | None = None,
                 quantize: bool = True, noise_sigma: float = 0.0, seed: int = 0):
        self.params = params or DesignParams()
        self.mounts = mounts or Mounts.with_tool(0.05)
        self.quantize = quantize
        self.noise_sigma = noise_sigma
        self.rng = np.random.default_rng([seed, 0x5E5])
        self._packed = kernels.pack_params(self.params)
        self._kern = kernels.get()
        et = self.mounts.end_to_tcp
        self._R = et.rotation                        # T -> E
        self._p = -et.rotation.T @ et.translation     # E origin in {T}
        h = 1e-6
        J = np.empty((6, 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            J[:, j] = (self._raw(d) - self._raw(-d)) / (2 * h)
        self._Jinv = np.linalg.inv(J)
        self.theta = np.zeros(6)

    def _raw(self, th) -> np.ndarray:
        out, status = self._kern.wrench_batch(np.ascontiguousarray(th, dtype=float)[None],
                                              self._packed)
        if status[0]:
            raise LimitBreach("sensor configuration outside its assembly range")
        return out[0]

    def deflect(self, w_end: np.ndarray, iters: int = 60, tol: float = 1e-10) -> np.ndarray:
        th = self.theta.copy()
        lim = self.params.joint_range
        for _ in range(iters):
            r = w_end - self._raw(th)
            if np.abs(r).max() < tol:
                break
            th = th + self._Jinv @ r
            if np.abs(th).max() > lim:
                raise LimitBreach("wrench beyond the spring deflection range")
        self.theta = th
        return th

    def measure(self, w_task: np.ndarray, tool_rot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Estimated task-axis wrench and the observed encoder angles."""
        wt = np.concatenate([tool_rot.T @ w_task[:3], tool_rot.T @ w_task[3:]])
        we = wrench_transform(Wrench.from_vector(wt, "T"), self._R, self._p).as_vector()
        th = self.deflect(we)
        obs = th
        if self.noise_sigma > 0:
            obs = obs + self.rng.normal(0.0, self.noise_sigma, 6)
        if self.quantize:
            q = self.params.encoder_quantum
            obs = np.round(obs / q) * q
        est = Wrench.from_vector(self._raw(obs), "E")
        back = wrench_transform_inverse(est, self._R, self._p).as_vector()
        return np.concatenate([tool_rot @ back[:3], tool_rot @ back[3:]]), obs


@dataclass(frozen=True)
class TaskConfig:
    impedance: ImpedanceParams = field(default_factory=ImpedanceParams)
    dt: float = 1e-3
    fz_ref: float = -2.5
    contact_threshold: float = 0.5
    entry_drop: float = 0.3
    approach_speed: float = 0.01
    approach_gap: float = 0.002
    contact_timeout: float = 5.0
    settle_time: float = 2.0
    # buffing
    scan_bounds: tuple = (0.0, 0.06, 0.0, 0.06)
    scan_pitch: float = 0.02
    scan_speed: float = 0.02
    # peg-in-hole
    offset_range: tuple = (1e-3, 3e-3)
    preload_time: float = 0.5
    spiral_pitch: float = 1e-3
    spiral_speed: float = 4e-3
    spiral_radius: float = 5e-3
    yaw_dither: float = 0.02
    insert_depth: float = 0.01
    insert_step: float = 5e-6
    insert_timeout: float = 5.0
    jam_force: float = 6.0
    tool_length: float = 0.05
    sensor_quantize: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["impedance"] = self.impedance.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        kw = dict(d)
        if "impedance" in kw:
            kw["impedance"] = ImpedanceParams.from_dict(kw["impedance"])
        for k in ("scan_bounds", "offset_range"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


TRACE_COLUMNS = ("t", "phase", "x", "y", "z", "rx", "ry", "rz",
                 "xd", "yd", "zd", "rxd", "ryd", "rzd",
                 "fx", "fy", "fz", "mx", "my", "mz")


@dataclass
class TaskReport:
    task: str
    seed: int
    feedback: bool
    outcome: str = "Timeout"
    phases: list = field(default_factory=list)     # (name, start time)
    metrics: dict = field(default_factory=dict)
    message: str = ""
    trace: np.ndarray | None = None
    phase_names: tuple = ()

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def to_dict(self) -> dict:
        return {"task": self.task, "seed": self.seed, "feedback": self.feedback,
                "outcome": self.outcome, "success": self.success, "phases": self.phases,
                "metrics": self.metrics, "message": self.message}


class _Loop:
    """Shared plumbing: state, sensor, limits and trace."""

    def __init__(self, env: ContactEnvironment, cfg: TaskConfig, seed: int, feedback: bool,
                 phase_names):
        self.env, self.cfg, self.feedback = env, cfg, feedback
        self.sensor = Delta6Sensor(mounts=Mounts.with_tool(cfg.tool_length),
                                   quantize=cfg.sensor_quantize, seed=seed)
        self.state = ControlState()
        self.names = tuple(phase_names)
        self.rows = []
        self.phases = []
        self.W = np.zeros(6)
        self.flange = None

    def set_phase(self, name):
        self.state.phase = name
        self.phases.append((name, round(self.state.t, 9)))

    def step(self, wrench_ref=None, pid_mask=None):
        s, cfg, imp = self.state, self.cfg, self.cfg.impedance
        if pid_mask is not None and self.feedback:
            dX = pid_force_loop(s, self.W, imp, cfg.dt, wrench_ref)
            s.X_d = s.X_d + np.where(pid_mask, dX, 0.0)
        if self.feedback:
            X_prev = s.X.copy()
            self.state = impedance_step(s, self.W, imp, cfg.dt)
            s = self.state
            vel = (s.X - X_prev) / cfg.dt
        else:
            # stiff position control: the TCP follows X_d exactly
            vel = (s.X_d - s.X) / cfg.dt
            s.X, s.Xdot, s.t = s.X_d.copy(), vel, s.t + cfg.dt
        w_env = self.env.wrench(s.X, vel)
        self._check(w_env, "contact")
        R = euler_xyz_to_rot(*s.X[3:])
        self.W, theta = self.sensor.measure(w_env, R)
        self._check(self.W, "measured")
        # flange command that keeps the TCP at X given the current deflection
        chain = tcp_chain(theta, self.sensor.params, self.sensor.mounts)
        self.flange = flange_command(RigidTransform(R, s.X[:3], "T", "G"), chain.flange_to_tcp)
        self.rows.append(np.concatenate([[s.t, self.names.index(s.phase)], s.X, s.X_d, self.W]))

    def _check(self, W, what):
        imp = self.cfg.impedance
        if np.abs(W[:3]).max() > imp.f_limit or np.abs(W[3:]).max() > imp.m_limit:
            raise LimitBreach(f"{what} wrench {np.round(W, 3).tolist()} exceeds limits "
                              f"at t={self.state.t:.3f}s")


def _finish(report: TaskReport, loop: _Loop) -> TaskReport:
    report.phases = loop.phases
    report.trace = np.array(loop.rows) if loop.rows else np.zeros((0, len(TRACE_COLUMNS)))
    report.phase_names = loop.names
    return report


def _contact(loop: _Loop, ref=None, mask=None):
    """Advance X_d along +z until the normal force crosses the threshold."""
    cfg = loop.cfg
    t_end = loop.state.t + cfg.contact_timeout
    while abs(loop.W[2]) <= cfg.contact_threshold:
        if loop.state.t > t_end:
            raise Timeout("no contact detected")
        loop.state.X_d = loop.state.X_d + np.array([0, 0, cfg.approach_speed * cfg.dt, 0, 0, 0])
        loop.step()


def run_buffing(env: ContactEnvironment, cfg: TaskConfig, seed: int = 0,
                feedback: bool = True) -> TaskReport:
    loop = _Loop(env, cfg, seed, feedback, ("approach", "contacting", "polishing"))
    rep = TaskReport("buffing", seed, feedback)
    x0, _, y0, _ = cfg.scan_bounds
    zs, *_ = env.surface(x0, y0)
    X0 = np.array([x0, y0, zs - cfg.approach_gap, *env.surface_tilt(x0, y0), 0.0])
    loop.state = ControlState(X=X0.copy(), X_d=X0.copy())
    path, _ = plan_zigzag(cfg.scan_bounds, cfg.scan_pitch, cfg.scan_speed, 1 / cfg.dt)
    ref = np.array([0, 0, cfg.fz_ref, 0, 0, 0])
    mask = np.array([False, False, True, True, True, False])
    try:
        loop.set_phase("contacting")
        _contact(loop)
        loop.set_phase("polishing")
        t_pol = loop.state.t
        for xy in path:
            loop.state.X_d[:2] = xy
            loop.step(ref, mask)
        rep.outcome = "success"
        tr = np.array(loop.rows)
        after = tr[:, 0] >= t_pol + cfg.settle_time
        if after.any():
            W = tr[after, 14:20]
            rep.metrics = {"fz_mean": float(W[:, 2].mean()),
                           "fz_max_dev": float(np.abs(W[:, 2] - cfg.fz_ref).max()),
                           "mx_max": float(np.abs(W[:, 3]).max()),
                           "my_max": float(np.abs(W[:, 4]).max()),
                           "settle_start": t_pol + cfg.settle_time}
    except TaskFailure as exc:
        rep.outcome, rep.message = type(exc).__name__, str(exc)
    return _finish(rep, loop)


def run_peg_in_hole(env: ContactEnvironment, cfg: TaskConfig, seed: int = 0,
                    feedback: bool = True) -> TaskReport:
    rng = np.random.default_rng([seed, 0x9E6])
    r = rng.uniform(*cfg.offset_range)
    a = rng.uniform(0, 2 * math.pi)
    nominal = np.array(env.hole_center)
    true_env = replace(env, hole_center=tuple(nominal + r * np.array([math.cos(a), math.sin(a)])))
    names = ("approach", "contacting", "preload", "searching", "inserting")
    loop = _Loop(true_env, cfg, seed, feedback, names)
    rep = TaskReport("peg_in_hole", seed, feedback)
    rep.metrics["offset"] = float(r)
    X0 = np.array([nominal[0], nominal[1], -cfg.approach_gap, 0, 0, 0])
    loop.state = ControlState(X=X0.copy(), X_d=X0.copy())
    target = cfg.insert_depth
    try:
        if not feedback:
            loop.set_phase("inserting")
            while loop.state.X[2] < target:
                loop.state.X_d[2] += cfg.approach_speed * cfg.dt
                loop.step()
                if loop.state.t > cfg.contact_timeout + cfg.insert_timeout:
                    raise Timeout("insertion did not finish")
            rep.outcome = "success"
            return _finish(rep, loop)
        ref = np.array([0, 0, cfg.fz_ref, 0, 0, 0])
        loop.set_phase("contacting")
        _contact(loop)
        loop.set_phase("preload")
        zmask = np.array([False, False, True, False, False, False])
        fz = []
        for _ in range(int(round(cfg.preload_time / cfg.dt))):
            loop.step(ref, zmask)
            fz.append(-loop.W[2])
        level = float(np.mean(fz[len(fz) // 2:]))
        loop.set_phase("searching")
        spiral = plan_spiral(nominal, cfg.spiral_pitch, cfg.yaw_dither, speed=cfg.spiral_speed,
                             rate=1 / cfg.dt, max_radius=cfg.spiral_radius)
        alpha = cfg.dt / 0.1   # 100 ms running mean of the sustained normal force
        entered = False
        for wp in spiral:
            loop.state.X_d[0], loop.state.X_d[1], loop.state.X_d[5] = wp
            loop.step(ref, zmask)
            fn = -loop.W[2]
            if fn < (1 - cfg.entry_drop) * level:
                entered = True
                break
            level += alpha * (fn - level)
        if not entered:
            raise Timeout("spiral search exhausted without detecting the hole")
        rep.metrics["entry_time"] = loop.state.t
        loop.set_phase("inserting")
        # near-zero wrench: lateral forces and moments nulled, small push along z
        ins_ref = np.array([0, 0, -1.0, 0, 0, 0])
        lat = np.array([True, True, False, False, False, False])
        t_end = loop.state.t + cfg.insert_timeout
        while loop.state.X[2] < target:
            if loop.state.t > t_end:
                raise Timeout("insertion did not finish")
            if abs(loop.W[2]) < cfg.jam_force:
                loop.state.X_d[2] += cfg.insert_step
            loop.step(ins_ref, lat)
        rep.outcome = "success"
    except TaskFailure as exc:
        rep.outcome, rep.message = type(exc).__name__, str(exc)
    return _finish(rep, loop)


def run_task(task: str, env: ContactEnvironment, cfg: TaskConfig | None = None, seed: int = 0,
             feedback: bool = True) -> TaskReport:
    """Run one task to success, LimitBreach or Timeout."""
    cfg = cfg or TaskConfig()
    if task == "buffing":
        if env.kind != "height_field_surface":
            raise ValueError("buffing needs a height-field environment")
        return run_buffing(env, cfg, seed, feedback)
    if task == "peg_in_hole":
        if env.kind != "peg_hole":
            raise ValueError("peg_in_hole needs a peg_hole environment")
        return run_peg_in_hole(env, cfg, seed, feedback)
    raise ValueError(f"unknown task {task!r}")
