"""Accuracy metrics, cross-axis sensitivity, drift and latency harnesses."""
from __future__ import annotations

import math
import os
import platform
import time
from dataclasses import asdict, dataclass

import numpy as np

AXES = ("fx", "fy", "fz", "mx", "my", "mz")


def nearest_rank(x, q: float, axis: int = 0) -> np.ndarray:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value."""
    x = np.sort(np.asarray(x, dtype=float), axis=axis)
    n = x.shape[axis]
    k = max(1, math.ceil(q / 100.0 * n))
    return np.take(x, k - 1, axis=axis)


def full_scale_from_spec(report) -> np.ndarray:
    """Per-axis full scale (max magnitude of each range) from a SpecReport."""
    rng = list(report.f_range) + list(report.m_range)
    return np.array([max(abs(lo), abs(hi)) for lo, hi in rng])


@dataclass(frozen=True)
class ErrorReport:
    percentiles: tuple[float, ...]
    values: np.ndarray        # (len(percentiles), 6) in % FS
    full_scale: np.ndarray    # (6,)
    count: int

    def at(self, q: float) -> np.ndarray:
        return self.values[self.percentiles.index(q)]

    def to_dict(self) -> dict:
        return {"percentiles": list(self.percentiles), "full_scale": self.full_scale.tolist(),
                "count": self.count,
                "table": {f"p{q:g}": dict(zip(AXES, row.tolist()))
                          for q, row in zip(self.percentiles, self.values)}}


def percentile_errors(pred, truth, full_scale, percentiles=(95, 99, 100)) -> ErrorReport:
    """Per-axis absolute error as % of full scale at nearest-rank percentiles."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise ValueError("expected non-empty (N, C) series")
    fs = np.broadcast_to(np.asarray(full_scale, dtype=float), (pred.shape[1],))
    if np.any(fs <= 0):
        raise ValueError("full scale must be positive")
    err = np.abs(pred - truth) / fs * 100.0
    vals = np.stack([nearest_rank(err, q) for q in percentiles])
    return ErrorReport(tuple(float(q) for q in percentiles), vals, fs.copy(), pred.shape[0])


def compare_estimators(dataset, params, full_scale, weights=None, standardizer=None,
                       percentiles=(95, 99, 100)) -> dict:
    """Analytic and (optionally) network error reports on the same samples.

    Samples are the targets ``e+1`` of every valid window ending at ``e``,
    so both estimators are scored on identical rows.  The analytic
    estimate uses the encoder row at the target instant.
    """
    from .estimator import estimate_wrench_batch
    from .seqnet.data import window_ends
    T_w = 25 if weights is None else weights.spec.T_w
    ends = window_ends(dataset.t, dataset.rate, T_w)
    truth = dataset.wrench[ends + 1]
    ana = np.nan_to_num(estimate_wrench_batch(dataset.theta_e[ends + 1], params, strict=False))
    out = {"samples": int(ends.size),
           "analytic": percentile_errors(ana, truth, full_scale, percentiles)}
    if weights is not None:
        from .seqnet.train import predict_series
        pred = predict_series(weights, standardizer, dataset.theta_e, ends)
        out["network"] = percentile_errors(pred, truth, full_scale, percentiles)
        out["ratio_p99"] = out["network"].at(99) / out["analytic"].at(99)
    return out


@dataclass(frozen=True)
class SensitivityMatrix:
    """``gain[i, j]``: residual on channel i per unit FS-normalised truth on axis j."""

    gain: np.ndarray
    spread: np.ndarray     # per-cycle standard deviation of each slope
    excited: tuple[int, ...]

    def mean_off_diagonal(self) -> float:
        cols = list(self.excited)
        sub = np.abs(self.gain[:, cols])
        mask = np.ones_like(sub, dtype=bool)
        for c, j in enumerate(cols):
            mask[j, c] = False
        return float(sub[mask].mean())

    def to_dict(self) -> dict:
        return {"gain": self.gain.tolist(), "spread": self.spread.tolist(),
                "excited": list(self.excited), "mean_off_diagonal": self.mean_off_diagonal()}


def _slope(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0]


def cross_axis_matrix(pred, truth, schedule, full_scale, cycles=None) -> SensitivityMatrix:
    """FS-normalised residual gains from single-axis excitation segments.

    ``schedule[n]`` is the excited axis (0..5) of sample n or -1.  For each
    excited axis the residual of every channel is regressed (with an
    intercept) on the on-axis truth.  ``cycles`` optionally labels the
    repetition each sample belongs to; the spread of per-cycle slopes is
    reported as repeatability.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    schedule = np.asarray(schedule)
    if pred.shape != truth.shape or schedule.shape != pred.shape[:1]:
        raise ValueError("pred, truth and schedule lengths differ")
    C = pred.shape[1]
    fs = np.broadcast_to(np.asarray(full_scale, dtype=float), (C,))
    res = (pred - truth) / fs
    xn = truth / fs
    gain = np.zeros((C, C))
    spread = np.zeros((C, C))
    excited = tuple(int(j) for j in np.unique(schedule) if j >= 0)
    if not excited:
        raise ValueError("schedule marks no excited axis")
    for j in excited:
        sel = schedule == j
        x = xn[sel, j]
        if np.var(x) == 0:
            raise ValueError(f"degenerate excitation on axis {j}")
        for i in range(C):
            gain[i, j] = _slope(x, res[sel, i])
        if cycles is not None:
            cyc = np.asarray(cycles)[sel]
            per = []
            for c in np.unique(cyc):
                m = cyc == c
                if m.sum() > 2 and np.var(x[m]) > 0:
                    per.append([_slope(x[m], res[sel][m, i]) for i in range(C)])
            if len(per) > 1:
                spread[:, j] = np.std(per, axis=0, ddof=1)
    return SensitivityMatrix(gain, spread, excited)


def single_axis_schedule(n_per_axis: int, rate: float, amplitude, axes=range(6),
                         freq: float = 0.5, cycles: int = 4):
    """Sinusoidal single-axis wrench excitation, one segment per axis.

    Returns (wrench (N, 6), schedule (N,), cycle labels (N,)).
    """
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (6,))
    t = np.arange(n_per_axis) / rate
    w, sched, cyc = [], [], []
    for j in axes:
        seg = np.zeros((n_per_axis, 6))
        seg[:, j] = amp[j] * np.sin(2 * math.pi * freq * t)
        w.append(seg)
        sched.append(np.full(n_per_axis, j))
        cyc.append(np.minimum((t * freq).astype(int), cycles - 1))
    return np.concatenate(w), np.concatenate(sched), np.concatenate(cyc)


@dataclass(frozen=True)
class DriftReport:
    slope: float               # % FS per hour (or per degree C)
    stderr: float
    segment_means: np.ndarray  # % FS
    midpoints: np.ndarray      # hours (or degrees C)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segment_means"] = self.segment_means.tolist()
        d["midpoints"] = self.midpoints.tolist()
        return d


def _drift_fit(means, mids) -> tuple[float, float]:
    n = means.size
    A = np.column_stack([mids, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, means, rcond=None)
    if n > 2:
        resid = means - A @ coef
        s2 = resid @ resid / (n - 2)
        se = math.sqrt(s2 / np.sum((mids - mids.mean()) ** 2))
    else:
        se = float("nan")
    return float(coef[0]), se


def drift_rate(err_norm, rate: float, segment_s: float = 3600.0, full_scale: float = 1.0) -> DriftReport:
    """Slope of per-segment mean error norm, in % FS per hour.

    ``err_norm`` is sampled at ``rate`` Hz and expressed in the same unit as
    ``full_scale``.  A trailing partial segment is dropped.
    """
    e = np.asarray(err_norm, dtype=float).ravel() / full_scale * 100.0
    per = int(round(segment_s * rate))
    n_seg = e.size // per if per > 0 else 0
    if n_seg < 2:
        raise ValueError("need at least two full segments")
    means = e[:n_seg * per].reshape(n_seg, per).mean(axis=1)
    mids = (np.arange(n_seg) + 0.5) * segment_s / 3600.0
    slope, se = _drift_fit(means, mids)
    return DriftReport(slope, se, means, mids)


def drift_rate_per_temp(err_norm, temperature, rate: float, segment_s: float = 3600.0,
                        full_scale: float = 1.0) -> DriftReport:
    """Like :func:`drift_rate` but against the per-segment mean temperature (% FS per deg C)."""
    e = np.asarray(err_norm, dtype=float).ravel() / full_scale * 100.0
    T = np.asarray(temperature, dtype=float).ravel()
    if T.shape != e.shape:
        raise ValueError("temperature and error series lengths differ")
    per = int(round(segment_s * rate))
    n_seg = e.size // per if per > 0 else 0
    if n_seg < 2:
        raise ValueError("need at least two full segments")
    means = e[:n_seg * per].reshape(n_seg, per).mean(axis=1)
    mids = T[:n_seg * per].reshape(n_seg, per).mean(axis=1)
    if np.ptp(mids) == 0:
        raise ValueError("temperature does not vary between segments")
    slope, se = _drift_fit(means, mids)
    return DriftReport(slope, se, means, mids)


# -- latency ---------------------------------------------------------------------

def machine_info() -> dict:
    from . import kernels
    return {"platform": platform.platform(), "machine": platform.machine(),
            "processor": platform.processor(), "python": platform.python_version(),
            "numpy": np.__version__, "cpus": os.cpu_count(), "kernel_backend": kernels.BACKEND}


def _estimator_call(kind: str, params, weights):
    from .estimator import estimate_wrench, estimate_wrench_batch
    if kind == "analytic":
        return lambda th: estimate_wrench_batch(th[-1:], params)
    if kind == "analytic_scalar":
        return lambda th: estimate_wrench(th[-1], params)
    if weights is None:
        from .seqnet import ModelSpec, init_weights
        weights = init_weights(ModelSpec.default(kind), 0)
    from .seqnet.models import forward
    from .seqnet.autodiff import no_grad
    T_w = weights.spec.T_w

    def call(th):
        with no_grad():
            return forward(weights.spec, weights.tensors, th[None, -T_w:]).data
    return call


def latency_bench(kind: str = "analytic", iterations: int = 10_000, *, params=None,
                  weights=None, runs: int = 5, warmup: int = 200, seed: int = 0) -> dict:
    """Per-call wall time of one estimator.

    ``kind`` is ``analytic`` (batch path, one row), ``analytic_scalar``
    (pure-Python path) or a network kind (B = 1 forward; random-init
    weights if none are given).  Inputs rotate through a pool of distinct
    histories.  ``mean_s`` is the median over ``runs`` of each run's mean.
    """
    from .geometry import DesignParams
    params = params or DesignParams()
    call = _estimator_call(kind, params, weights)
    rng = np.random.default_rng(seed)
    T = 25 if weights is None else weights.spec.T_w
    pool = rng.uniform(-0.3, 0.3, (64, T, 6))
    for i in range(warmup):
        call(pool[i % 64])
    per_run = max(1, iterations // runs)
    samples = np.empty(per_run * runs)
    means = []
    clock = time.perf_counter_ns
    for r in range(runs):
        for i in range(per_run):
            x = pool[(r * per_run + i) % 64]
            t0 = clock()
            call(x)
            samples[r * per_run + i] = (clock() - t0) * 1e-9
        means.append(samples[r * per_run:(r + 1) * per_run].mean())
    mean = float(np.median(means))
    return {"kind": kind, "iterations": int(samples.size), "mean_s": mean,
            "p50_s": float(nearest_rank(samples, 50)), "p99_s": float(nearest_rank(samples, 99)),
            "rate_hz": 1.0 / mean, "machine": machine_info()}
