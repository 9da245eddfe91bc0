"""numpy implementations of the hot kernels (reference and fallback)."""
from __future__ import annotations

import numpy as np

_BLOCK = 1 << 22  # doubles per temporary


def _step(m):
    return max(1, _BLOCK // (3 * max(1, m)))


def wrench_batch(theta_e, packed):
    th_e = np.ascontiguousarray(theta_e, dtype=float)
    a, b, la, lb, off = packed[:5]
    cphi, sphi, k = packed[5:8], packed[8:11], packed[11:17]
    n = th_e.shape[0]
    status = np.zeros(n, dtype=np.int8)

    th = th_e[:, :3] + off
    ct, st = np.cos(th), np.sin(th)
    r = (a - b) + la * ct
    C = np.stack([r * cphi, r * sphi, la * st], axis=-1)        # (n, 3, 3)
    w = np.einsum("nij,nij->ni", C, C)
    A = 2.0 * (C[:, 1:] - C[:, :1])
    rhs = w[:, 1:] - w[:, :1]
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    bad = np.abs(det) <= 1e-15
    det = np.where(bad, 1.0, det)
    x0 = (A[:, 1, 1] * rhs[:, 0] - A[:, 0, 1] * rhs[:, 1]) / det
    y0 = (-A[:, 1, 0] * rhs[:, 0] + A[:, 0, 0] * rhs[:, 1]) / det
    x1 = -(A[:, 1, 1] * A[:, 0, 2] - A[:, 0, 1] * A[:, 1, 2]) / det
    y1 = -(-A[:, 1, 0] * A[:, 0, 2] + A[:, 0, 0] * A[:, 1, 2]) / det
    dx, dy = x0 - C[:, 0, 0], y0 - C[:, 0, 1]
    qa = x1 * x1 + y1 * y1 + 1.0
    qb = 2.0 * (dx * x1 + dy * y1 - C[:, 0, 2])
    qc = dx * dx + dy * dy + C[:, 0, 2] ** 2 - lb * lb
    disc = qb * qb - 4.0 * qa * qc
    bad |= disc < 0
    sq = np.sqrt(np.where(bad, 0.0, disc))
    status[bad] = 1
    status[(~bad) & (sq / (2.0 * qa) < 1e-9)] = 2
    z = (-qb + sq) / (2.0 * qa)
    P = np.stack([x0 + x1 * z, y0 + y1 * z, z], axis=-1)

    ba = b - a
    v = np.stack([P[:, None, 0] - la * ct * cphi + ba * cphi,
                  P[:, None, 1] - la * ct * sphi + ba * sphi,
                  P[:, None, 2] - la * st], axis=-1) / lb          # unit vectors
    vx_loc = v[..., 0] * cphi + v[..., 1] * sphi
    denom = la * (vx_loc * st - v[..., 2] * ct)
    sing = np.abs(denom) <= 1e-9
    status[(status == 0) & sing.any(axis=1)] = 3
    mag = k[:3] * th_e[:, :3] / np.where(sing, 1.0, denom)
    F0 = -np.einsum("ni,nij->nj", mag, v)
    M0 = k[3:] * th_e[:, 3:]

    R = _rot_zxy(th_e[:, 5], th_e[:, 3], th_e[:, 4])
    out = np.empty((n, 6))
    out[:, :3] = np.einsum("nji,nj->ni", R, F0)
    out[:, 3:] = np.einsum("nji,nj->ni", R, M0)
    out[status != 0] = np.nan
    return out, status


def _rot_zxy(z, x, y):
    cz, sz, cx, sx, cy, sy = np.cos(z), np.sin(z), np.cos(x), np.sin(x), np.cos(y), np.sin(y)
    R = np.empty(z.shape + (3, 3))
    R[..., 0, 0] = cz * cy - sz * sx * sy
    R[..., 0, 1] = -sz * cx
    R[..., 0, 2] = cz * sy + sz * sx * cy
    R[..., 1, 0] = sz * cy + cz * sx * sy
    R[..., 1, 1] = cz * cx
    R[..., 1, 2] = sz * sy - cz * sx * cy
    R[..., 2, 0] = -cx * sy
    R[..., 2, 1] = sx
    R[..., 2, 2] = cx * cy
    return R


def rotated_extrema(F0, R):
    F0 = np.asarray(F0, dtype=float)
    F0 = F0[np.all(np.isfinite(F0), axis=1)]
    R = np.asarray(R, dtype=float)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    step = _step(R.shape[0])
    for s in range(0, F0.shape[0], step):
        blk = F0[s:s + step]
        FE = np.einsum("mji,nj->mni", R, blk)
        lo = np.minimum(lo, FE.min(axis=(0, 1)))
        hi = np.maximum(hi, FE.max(axis=(0, 1)))
    return lo, hi


def rotated_diff_maxnorm(Fa, Ra, Fb, Rb):
    Fa, Fb = np.asarray(Fa, dtype=float), np.asarray(Fb, dtype=float)
    keep = np.all(np.isfinite(Fa), axis=1) & np.all(np.isfinite(Fb), axis=1)
    Fa, Fb = Fa[keep], Fb[keep]
    Ra, Rb = np.asarray(Ra, dtype=float), np.asarray(Rb, dtype=float)
    step = _step(Ra.shape[0])
    best = 0.0
    for s in range(0, Fa.shape[0], step):
        d = (np.einsum("mji,nj->mni", Rb, Fb[s:s + step])
             - np.einsum("mji,nj->mni", Ra, Fa[s:s + step]))
        best = max(best, float(np.sqrt(np.einsum("mni,mni->mn", d, d).max())))
    return best


def play(u, h, y0):
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    y = np.empty_like(u)
    prev = np.clip(np.asarray(y0, dtype=float), u[0] - h, u[0] + h)
    lo, hi = u - h, u + h
    for t in range(u.shape[0]):
        prev = np.minimum(np.maximum(prev, lo[t]), hi[t])
        y[t] = prev
    return y
