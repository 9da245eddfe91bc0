"""Synthetic Delta6 plant.

Trajectories are authored in joint space and the ground-truth wrench is
defined by the ideal statics of the *true* plant parameters on the clean
angles.  Non-idealities only corrupt what the encoders report:

    clean theta_e -> hysteresis play -> backlash play -> zero offset/drift
                  -> gaussian noise -> quantisation -> clamp to range

With ``dynamics`` enabled the mechanism follows a second-order low-pass of
the load wrench, so the encoders show the filtered wrench while the label
stays the load.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import signal

from . import kernels
from .estimator import estimate_wrench_batch
from .geometry import DesignParams


class Aliased(ValueError):
    """Test frequency at or above the Nyquist rate."""


@dataclass(frozen=True)
class Dynamics:
    """Second-order low-pass between load and mechanism (Hz, damping ratio)."""

    f_c: float = 30.0
    zeta: float = 0.707

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")
        if not 0 < self.zeta <= 2:
            raise ValueError("zeta must lie in (0, 2]")

    def transfer(self):
        wn = 2 * math.pi * self.f_c
        return [wn * wn], [1.0, 2 * self.zeta * wn, wn * wn]

    def response(self, f_hz):
        """Complex frequency response at ``f_hz``."""
        w = 2j * math.pi * np.asarray(f_hz, dtype=float)
        wn = 2 * math.pi * self.f_c
        return wn * wn / (w * w + 2 * self.zeta * wn * w + wn * wn)


@dataclass(frozen=True)
class Perturbation:
    """Zero-calibration emulation: the plant deviates from the nominal design."""

    length_frac: float = 0.02
    k_frac: float = 0.10
    offset_rad: float = 0.01
    seed: int = 0

    def apply(self, params: DesignParams):
        """Return (true params, per-joint encoder zero error)."""
        rng = np.random.default_rng([self.seed, 0xCA1])
        f = 1 + rng.uniform(-self.length_frac, self.length_frac, 5)
        kj = params.stiffness * (1 + rng.uniform(-self.k_frac, self.k_frac, 6))
        true = replace(params, a=params.a * f[0], b=params.b * f[1], c=params.c * f[2],
                       l_a=params.l_a * f[3], l_b=params.l_b * f[4], k_joint=tuple(kj))
        return true, rng.uniform(-self.offset_rad, self.offset_rad, 6)


def _six(v) -> tuple[float, ...]:
    arr = np.broadcast_to(np.asarray(v, dtype=float), (6,))
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class PlantConfig:
    params: DesignParams = field(default_factory=DesignParams)
    hysteresis_halfwidth: tuple[float, ...] = (0.005,) * 6
    backlash_deadband: tuple[float, ...] = (0.0,) * 6
    noise_sigma: float = 1e-4
    quantize: bool = True
    sample_rate: float = 50.0
    dynamics: Dynamics | None = None
    seed: int = 0
    perturbation: Perturbation | None = None
    offset_drift: tuple[float, ...] = (0.0,) * 6   # rad/s, slow thermal-style drift
    traj_freq_range: tuple[float, float] = (0.02, 1.0)

    def __post_init__(self):
        for name in ("hysteresis_halfwidth", "backlash_deadband", "offset_drift"):
            object.__setattr__(self, name, _six(getattr(self, name)))
        if min(self.hysteresis_halfwidth) < 0 or min(self.backlash_deadband) < 0:
            raise ValueError("hysteresis and backlash widths must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        lo, hi = self.traj_freq_range
        if not 0 < lo <= hi <= 2.0:
            raise ValueError("trajectory frequencies must lie in (0, 2] Hz")
        object.__setattr__(self, "traj_freq_range", (float(lo), float(hi)))

    @classmethod
    def ideal(cls, params: DesignParams | None = None, **kw) -> "PlantConfig":
        """All non-idealities off."""
        base = dict(hysteresis_halfwidth=0.0, backlash_deadband=0.0, noise_sigma=0.0,
                    quantize=False)
        base.update(kw)
        return cls(params=params or DesignParams(), **base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlantConfig":
        kw = dict(d)
        kw["params"] = DesignParams.from_dict(kw.get("params", {}))
        if kw.get("dynamics") is not None:
            kw["dynamics"] = Dynamics(**kw["dynamics"])
        if kw.get("perturbation") is not None:
            kw["perturbation"] = Perturbation(**kw["perturbation"])
        for name in ("hysteresis_halfwidth", "backlash_deadband", "offset_drift",
                     "traj_freq_range"):
            if name in kw and isinstance(kw[name], list):
                kw[name] = tuple(kw[name])
        return cls(**kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class TimeSeriesDataset:
    """Fixed-rate rows of (t, observed theta_e, wrench truth in {E})."""

    t: np.ndarray
    theta_e: np.ndarray
    wrench: np.ndarray
    rate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.theta_e = np.asarray(self.theta_e, dtype=float)
        self.wrench = np.asarray(self.wrench, dtype=float)
        n = self.t.shape[0]
        if self.theta_e.shape != (n, 6) or self.wrench.shape != (n, 6):
            raise ValueError("theta_e and wrench must be (N, 6) matching t")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return self.t.shape[0]

    def slice(self, start: int, stop: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.t[start:stop], self.theta_e[start:stop],
                                 self.wrench[start:stop], self.rate, dict(self.meta))

    def split(self, frac: float = 0.8):
        """Chronological split into (head, tail)."""
        cut = int(round(len(self) * frac))
        return self.slice(0, cut), self.slice(cut, len(self))


# -- signal generation ----------------------------------------------------------

def generate_trajectory(seed: int, duration: float, rate: float, params: DesignParams,
                        *, n_terms: int = 8, freq_range=(0.02, 1.0),
                        fill: float = 0.9) -> np.ndarray:
    """Clean encoder trajectory, shape (round(duration*rate), 6).

    Each joint is a sum of ``n_terms`` random-phase sinusoids with
    frequencies drawn log-uniformly in ``freq_range`` (Hz, at most 2) and
    amplitudes falling as 1/f; the sum is rescaled so the peak excursion
    is ``fill * joint_range``.
    """
    lo, hi = freq_range
    if not 0 < lo <= hi <= 2.0:
        raise ValueError("trajectory frequencies must lie in (0, 2] Hz")
    n = int(round(duration * rate))
    if n < 2:
        raise ValueError("duration too short for the sample rate")
    rng = np.random.default_rng([seed, 0x7A1])
    t = np.arange(n) / rate
    out = np.empty((n, 6))
    for j in range(6):
        f = np.exp(rng.uniform(math.log(lo), math.log(hi), n_terms))
        ph = rng.uniform(0, 2 * math.pi, n_terms)
        amp = 1.0 / f
        s = np.sin(2 * math.pi * np.outer(t, f) + ph) @ amp
        out[:, j] = s * (fill * params.joint_range / np.abs(s).max())
    return out


def play_operator(u, h, y0=None, *, backend: str | None = None) -> np.ndarray:
    """Classic play (backlash) operator.

    ``y[t] = min(max(y[t-1], u[t] - h), u[t] + h)``; ``u`` may be (T,) or
    (T, C) with ``h`` broadcast per column.  ``y0`` defaults to ``u[0]``.
    """
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("half-width must be non-negative")
    if u.shape[0] == 0:
        return u.copy()
    y0 = u[0] if y0 is None else y0
    return kernels.get(backend).play(u, h, y0)


def quantize(theta, quantum: float) -> np.ndarray:
    return np.round(np.asarray(theta) / quantum) * quantum


def _filter_fine(u, fine_rate: float, dyn: Dynamics) -> np.ndarray:
    """Low-pass a finely sampled column, piecewise-linear input, zero state."""
    dt = 1 / fine_rate
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete(signal.tf2ss(*dyn.transfer()), dt, method="foh")
    _, y, _ = signal.dlsim((Ad, Bd, Cd, Dd, dt), u)
    return y[:, 0]


def lowpass(x, rate: float, dyn: Dynamics, oversample: int = 16) -> np.ndarray:
    """Second-order low-pass of sampled rows (T,) or (T, C), zero initial state.

    Input is linearly interpolated on an ``oversample`` finer grid and the
    filter is propagated exactly for piecewise-linear input.
    """
    x = np.asarray(x, dtype=float)
    x2 = x[:, None] if x.ndim == 1 else x
    n = x2.shape[0]
    tf = np.arange((n - 1) * oversample + 1) / (rate * oversample)
    ts = np.arange(n) / rate
    out = np.empty_like(x2)
    for c in range(x2.shape[1]):
        y = _filter_fine(np.interp(tf, ts, x2[:, c]), rate * oversample, dyn)
        out[:, c] = y[::oversample]
    return out[:, 0] if x.ndim == 1 else out


def invert_wrench(target, params: DesignParams, theta0=None, *, iters: int = 30,
                  tol: float = 1e-12) -> np.ndarray:
    """Encoder deflections whose ideal wrench equals ``target`` (N, 6)."""
    W = np.atleast_2d(np.asarray(target, dtype=float))
    th = np.zeros_like(W) if theta0 is None else np.array(np.atleast_2d(theta0), dtype=float)
    h = 1e-7
    for _ in range(iters):
        cur = estimate_wrench_batch(th, params, strict=False)
        r = W - cur
        if np.nanmax(np.abs(r)) < tol:
            break
        J = np.empty(W.shape + (6,))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            J[:, :, j] = (estimate_wrench_batch(th + d, params, strict=False)
                          - estimate_wrench_batch(th - d, params, strict=False)) / (2 * h)
        th = th + np.linalg.solve(J, r[..., None])[..., 0]
    return th


# -- observation path -----------------------------------------------------------

def observe(clean, config: PlantConfig, rng: np.random.Generator, t=None,
            zero_error=None) -> tuple[np.ndarray, int]:
    """Apply the encoder-side non-idealities; returns (observed, clamped count)."""
    obs = play_operator(clean, np.array(config.hysteresis_halfwidth))
    if any(config.backlash_deadband):
        obs = play_operator(obs, 0.5 * np.array(config.backlash_deadband))
    if zero_error is not None:
        obs = obs + zero_error
    if any(config.offset_drift) and t is not None:
        obs = obs + np.outer(t, config.offset_drift)
    if config.noise_sigma > 0:
        obs = obs + rng.normal(0.0, config.noise_sigma, obs.shape)
    if config.quantize:
        obs = quantize(obs, config.params.encoder_quantum)
    lim = config.params.joint_range
    clamped = int(np.count_nonzero(np.abs(obs) > lim))
    return np.clip(obs, -lim, lim), clamped


def _true_params(config: PlantConfig):
    if config.perturbation is None:
        return config.params, None
    return config.perturbation.apply(config.params)


def simulate_dataset(config: PlantConfig, duration: float) -> TimeSeriesDataset:
    """Timestamped (observed encoders, ground-truth wrench) rows."""
    rate = config.sample_rate
    clean = generate_trajectory(config.seed, duration, rate, config.params,
                                freq_range=config.traj_freq_range)
    n = clean.shape[0]
    t = np.arange(n) / rate
    true_params, zero_err = _true_params(config)
    truth = estimate_wrench_batch(clean, true_params)
    mech = clean
    if config.dynamics is not None:
        if config.dynamics.f_c >= rate / 2:
            raise Aliased("low-pass cutoff at or above Nyquist")
        mech = invert_wrench(lowpass(truth, rate, config.dynamics), true_params, clean)
    rng = np.random.default_rng([config.seed, 0x0B5])
    obs, clamped = observe(mech, config, rng, t, zero_err)
    meta = {"config_hash": config.digest(), "seed": config.seed, "duration": duration,
            "clamped": clamped, "source": "simulate"}
    return TimeSeriesDataset(t, obs, truth, rate, meta)


# -- frequency response ---------------------------------------------------------

@dataclass
class BodeResult:
    freqs: np.ndarray
    gain_db: np.ndarray
    phase_deg: np.ndarray

    def cutoff_hz(self, level_db: float = -3.0) -> float:
        """First frequency where the gain crosses ``level_db`` (linear interp.)."""
        g = self.gain_db
        for i in range(1, len(g)):
            if (g[i - 1] - level_db) * (g[i] - level_db) <= 0 and g[i] != g[i - 1]:
                f0, f1 = self.freqs[i - 1], self.freqs[i]
                return float(f0 + (level_db - g[i - 1]) * (f1 - f0) / (g[i] - g[i - 1]))
        return float("nan")

    def phase_at(self, f_hz: float) -> float:
        return float(np.interp(f_hz, self.freqs, self.phase_deg))


def fit_sinusoid(y, t, f_hz):
    """Least-squares amplitude and phase (rad) of ``A sin(2 pi f t + phase) + c``."""
    w = 2 * math.pi * f_hz
    A = np.column_stack([np.sin(w * t), np.cos(w * t), np.ones_like(t)])
    (s, c, _), *_ = np.linalg.lstsq(A, y, rcond=None)
    return math.hypot(s, c), math.atan2(c, s)


def bode_sweep(config: PlantConfig, freqs, estimator=None, *, amplitude: float = 5.0,
               cycles: int = 40, settle_cycles: int = 10,
               oversample: int = 32) -> BodeResult:
    """Single-frequency F_z sine tests through the plant dynamics.

    The load is ``amplitude * sin(2 pi f t)`` along z of {E}.  The
    mechanism follows the low-pass of that load (if any), the encoders go
    through the observation path, and ``estimator`` (default: the
    analytic one with nominal parameters) maps them back to a wrench whose
    F_z is fitted against the load.
    """
    rate = config.sample_rate
    params = config.params
    if estimator is None:
        def estimator(th):
            return estimate_wrench_batch(th, params)
    true_params, zero_err = _true_params(config)
    # F_z as a function of equal proximal deflections, for inversion
    s_grid = np.linspace(-0.9 * params.joint_range, 0.9 * params.joint_range, 2001)
    th_grid = np.zeros((s_grid.size, 6))
    th_grid[:, :3] = s_grid[:, None]
    fz_grid = estimate_wrench_batch(th_grid, true_params)[:, 2]
    order = np.argsort(fz_grid)
    gains, phases = [], []
    for i, f in enumerate(np.asarray(freqs, dtype=float)):
        if f >= rate / 2:
            raise Aliased(f"{f} Hz is at or above Nyquist ({rate / 2} Hz)")
        n = int(math.ceil((cycles + settle_cycles) / f * rate))
        t = np.arange(n) / rate
        load = amplitude * np.sin(2 * math.pi * f * t)
        if config.dynamics is None:
            mech = load
        else:
            # the load is a continuous sinusoid, so filter it on a fine grid
            tf = np.arange((n - 1) * oversample + 1) / (rate * oversample)
            mech = _filter_fine(amplitude * np.sin(2 * math.pi * f * tf), rate * oversample,
                                config.dynamics)[::oversample]
        th = np.zeros((n, 6))
        th[:, :3] = np.interp(mech, fz_grid[order], s_grid[order])[:, None]
        th = _refine_fz(th, mech, true_params)
        rng = np.random.default_rng([config.seed, 0xB0DE, i])
        obs, _ = observe(th, config, rng, t, zero_err)
        est = estimator(obs)[:, 2]
        keep = t >= settle_cycles / f
        a_est, p_est = fit_sinusoid(est[keep], t[keep], f)
        a_ref, p_ref = fit_sinusoid(load[keep], t[keep], f)
        gains.append(20 * math.log10(a_est / a_ref))
        phases.append(math.degrees((p_est - p_ref + math.pi) % (2 * math.pi) - math.pi))
    return BodeResult(np.asarray(freqs, dtype=float), np.array(gains), np.array(phases))


def _refine_fz(th, fz_target, params, iters: int = 4):
    """Newton polish of equal proximal deflections so F_z hits the target."""
    h = 1e-7
    for _ in range(iters):
        f0 = estimate_wrench_batch(th, params)[:, 2]
        tp = th.copy()
        tp[:, :3] += h
        df = (estimate_wrench_batch(tp, params)[:, 2] - f0) / h
        th[:, :3] += ((fz_target - f0) / df)[:, None]
    return th
