"""Standardisation, sliding windows and chronological splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateChannel(ValueError):
    """A channel has zero variance and cannot be standardised."""


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class Standardizer:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    @classmethod
    def fit(cls, theta, wrench) -> "Standardizer":
        th = np.asarray(theta, dtype=float)
        w = np.asarray(wrench, dtype=float)
        si, so = th.std(axis=0), w.std(axis=0)
        # rounding leaves a constant column with a std of a few ulps
        scale = np.maximum(1.0, np.abs(np.concatenate([th.mean(axis=0), w.mean(axis=0)])))
        bad = np.flatnonzero(np.concatenate([si, so]) <= 1e-12 * scale)
        if bad.size:
            raise DegenerateChannel(f"zero-variance channel(s) {bad.tolist()}")
        return cls(th.mean(axis=0), si, w.mean(axis=0), so)

    def scale_in(self, theta):
        return (np.asarray(theta) - self.in_mean) / self.in_std

    def scale_out(self, wrench):
        return (np.asarray(wrench) - self.out_mean) / self.out_std

    def unscale_out(self, y):
        return np.asarray(y) * self.out_std + self.out_mean

    def unscale_in(self, x):
        return np.asarray(x) * self.in_std + self.in_mean

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("in_mean", "in_std", "out_mean", "out_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(*(np.asarray(d[k], dtype=float)
                     for k in ("in_mean", "in_std", "out_mean", "out_std")))


@dataclass
class WindowBatch:
    X: np.ndarray   # (B, T_w, 6) scaled encoder history
    Y: np.ndarray   # (B, 6) scaled wrench one sample after the window

    def __len__(self):
        return self.X.shape[0]


def window_ends(t, rate: float, T_w: int) -> np.ndarray:
    """Indices ``e`` usable as the last input sample of a window.

    The window is ``theta[e-T_w+1 .. e]`` and the target is ``W[e+1]``;
    ``e`` starts at ``T_w`` so every window has one earlier sample of
    context available (N - T_w - 1 pairs for an unbroken series).  Windows
    spanning a timestamp gap are dropped.
    """
    t = np.asarray(t, dtype=float)
    n = t.size
    if n < T_w + 2:
        raise TooShort(f"need at least {T_w + 2} samples, got {n}")
    step = np.rint(t * rate).astype(np.int64)
    ends = np.arange(T_w, n - 1)
    contiguous = step[ends + 1] - step[ends - T_w] == T_w + 1
    return ends[contiguous]


def gather(theta_s: np.ndarray, wrench_s: np.ndarray, ends: np.ndarray, T_w: int) -> WindowBatch:
    idx = ends[:, None] + np.arange(-T_w + 1, 1)
    return WindowBatch(theta_s[idx], wrench_s[ends + 1])


def make_windows(dataset, T_w: int, standardizer: Standardizer, ends=None) -> WindowBatch:
    """All (or the selected) windows of ``dataset`` in scaled units."""
    if ends is None:
        ends = window_ends(dataset.t, dataset.rate, T_w)
    return gather(standardizer.scale_in(dataset.theta_e), standardizer.scale_out(dataset.wrench),
                  np.asarray(ends), T_w)


def rolling_origin_folds(n: int, k: int = 3, min_train_frac: float = 0.25):
    """``k`` (train, val) index pairs with every val index after every train index.

    The first ``min_train_frac`` of the data is always training; the rest is
    cut into ``k`` equal blocks, each validating a model trained on all
    earlier data.
    """
    if k < 1:
        raise ValueError("need at least one fold")
    start = int(n * min_train_frac)
    edges = np.linspace(start, n, k + 1).astype(int)
    if np.any(np.diff(edges) < 1) or start < 1:
        raise TooShort("too few samples for the requested folds")
    idx = np.arange(n)
    return [(idx[:edges[i]], idx[edges[i]:edges[i + 1]]) for i in range(k)]


def batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]
