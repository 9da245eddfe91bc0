"""Timing of the compiled kernels against the numpy fallback."""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from .geometry import DesignParams, euler_zxy_to_rot_batch


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_bench(n_rows: int = 20_000, n_rot: int = 343, n_play: int = 100_000,
                 repeat: int = 3, seed: int = 0, backends=None) -> dict:
    """Best-of-``repeat`` wall time per kernel and backend, plus speedups.

    Inputs are identical for every backend and the outputs are compared,
    so a mismatch between the two implementations shows up as
    ``max_abs_diff``.
    """
    backends = list(backends or kernels.available())
    rng = np.random.default_rng(seed)
    params = DesignParams()
    packed = kernels.pack_params(params)
    th = rng.uniform(-0.4, 0.4, (n_rows, 6))
    F0 = rng.normal(0, 10, (n_rows // 4, 3))
    ang = rng.uniform(-0.5, 0.5, (n_rot, 3))
    R = euler_zxy_to_rot_batch(ang[:, 0], ang[:, 1], ang[:, 2])
    R2 = euler_zxy_to_rot_batch(ang[:, 0] + 1e-3, ang[:, 1], ang[:, 2])
    u = np.cumsum(rng.normal(0, 0.01, (n_play, 6)), axis=0)
    cases = {
        "wrench_batch": lambda k: k.wrench_batch(th, packed)[0],
        "rotated_extrema": lambda k: np.concatenate(k.rotated_extrema(F0, R)),
        "rotated_diff_maxnorm": lambda k: np.array([k.rotated_diff_maxnorm(F0, R, F0, R2)]),
        "play": lambda k: k.play(u, np.full(6, 0.005), np.zeros(6)),
    }
    out = {"backends": backends, "default": kernels.BACKEND, "kernels": {}}
    for name, fn in cases.items():
        row, ref = {}, None
        for b in backends:
            k = kernels.get(b)
            res = fn(k)
            row[b] = _best_of(lambda: fn(k), repeat)
            if ref is None:
                ref = res
            else:
                row["max_abs_diff"] = float(np.nanmax(np.abs(res - ref)))
        if "compiled" in row and "python" in row:
            row["speedup"] = row["python"] / row["compiled"]
        out["kernels"][name] = row
    return out
