"""Waypoint generators for the scanning and search motions."""
from __future__ import annotations

import math

import numpy as np


def plan_zigzag(bounds, pitch: float, speed: float, rate: float = 1000.0):
    """Boustrophedon scan over ``bounds = (x0, x1, y0, y1)``.

    Passes run along y (alternating direction) and are spaced ``pitch``
    apart in x, ``ceil(width / pitch) + 1`` of them with the last pass on
    the far edge.  Returns (xy waypoints (N, 2), pass index (N,)) sampled
    at ``rate`` Hz at constant ``speed``; pass index is -1 on the
    transitions between passes.
    """
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate bounds")
    if pitch <= 0 or speed <= 0 or rate <= 0:
        raise ValueError("pitch, speed and rate must be positive")
    n_pass = math.ceil((x1 - x0) / pitch - 1e-9) + 1
    xs = np.minimum(x0 + pitch * np.arange(n_pass), x1)
    corners, labels = [], []
    for i, x in enumerate(xs):
        ya, yb = (y0, y1) if i % 2 == 0 else (y1, y0)
        corners += [(x, ya), (x, yb)]
        labels += [i, -1]
    corners = np.array(corners)
    step = speed / rate
    pts, tags = [corners[:1]], [np.array([0])]
    for k in range(len(corners) - 1):
        a, b = corners[k], corners[k + 1]
        n = max(1, math.ceil(np.linalg.norm(b - a) / step))
        s = np.arange(1, n + 1)[:, None] / n
        pts.append(a + s * (b - a))
        tags.append(np.full(n, labels[k]))
    return np.concatenate(pts), np.concatenate(tags)


def plan_spiral(center, pitch: float, yaw_dither: float = 0.0, *, speed: float = 0.005,
                rate: float = 1000.0, max_radius: float = 0.005, dither_hz: float = 1.0):
    """Archimedean spiral r = pitch * phi / (2 pi) from ``center`` at constant path speed.

    Returns (N, 3) rows of (x, y, yaw) at ``rate`` Hz until ``max_radius``
    is reached.  The yaw dither is ``yaw_dither * sin(2 pi dither_hz t)``.
    """
    if pitch <= 0 or speed <= 0 or rate <= 0 or max_radius <= 0:
        raise ValueError("pitch, speed, rate and max_radius must be positive")
    cx, cy = map(float, center)
    phi_end = 2 * math.pi * max_radius / pitch
    # arc length s(phi) = pitch/(4 pi) * (phi sqrt(1+phi^2) + asinh(phi))
    total = pitch / (4 * math.pi) * (phi_end * math.sqrt(1 + phi_end**2) + math.asinh(phi_end))
    n = max(2, math.ceil(total / speed * rate) + 1)
    s = np.linspace(0.0, total, n)
    phi = np.sqrt(4 * math.pi * s / pitch)  # small-angle inverse as a starting point
    for _ in range(30):
        g = pitch / (4 * math.pi) * (phi * np.sqrt(1 + phi**2) + np.arcsinh(phi)) - s
        phi = np.maximum(phi - g / (pitch / (2 * math.pi) * np.sqrt(1 + phi**2)), 0.0)
    r = pitch * phi / (2 * math.pi)
    t = np.arange(n) / rate
    yaw = yaw_dither * np.sin(2 * math.pi * dither_hz * t)
    return np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi), yaw])
