# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``delta6.kernels`` for the contracts."""
import numpy as np

from libc.math cimport cos, sin, sqrt, fabs, isfinite, INFINITY, NAN


cdef inline void _rot_zxy(double z, double x, double y, double* R) noexcept nogil:
    cdef double cz = cos(z), sz = sin(z), cx = cos(x), sx = sin(x), cy = cos(y), sy = sin(y)
    R[0] = cz * cy - sz * sx * sy
    R[1] = -sz * cx
    R[2] = cz * sy + sz * sx * cy
    R[3] = sz * cy + cz * sx * sy
    R[4] = cz * cx
    R[5] = sz * sy - cz * sx * cy
    R[6] = -cx * sy
    R[7] = sx
    R[8] = cx * cy


cdef int _wrench_row(const double* th_e, const double* p, double* out) noexcept nogil:
    cdef double a = p[0], b = p[1], la = p[2], lb = p[3], off = p[4]
    cdef double C[9]
    cdef double ct[3]
    cdef double st[3]
    cdef double w[3]
    cdef double A[6]
    cdef double rr, det, rhs0, rhs1, x0, y0, x1, y1, dx, dy, qa, qb, qc, disc, sq, z
    cdef double Px, Py, Pz, vx, vy, vz, vloc, den, mag
    cdef double F0[3]
    cdef double M0[3]
    cdef double R[9]
    cdef int i, j
    for i in range(3):
        ct[i] = cos(th_e[i] + off)
        st[i] = sin(th_e[i] + off)
        rr = (a - b) + la * ct[i]
        C[3 * i] = rr * p[5 + i]
        C[3 * i + 1] = rr * p[8 + i]
        C[3 * i + 2] = la * st[i]
        w[i] = C[3 * i] * C[3 * i] + C[3 * i + 1] * C[3 * i + 1] + C[3 * i + 2] * C[3 * i + 2]
    for j in range(2):
        for i in range(3):
            A[3 * j + i] = 2.0 * (C[3 * (j + 1) + i] - C[i])
    rhs0 = w[1] - w[0]
    rhs1 = w[2] - w[0]
    det = A[0] * A[4] - A[1] * A[3]
    if fabs(det) <= 1e-15:
        return 1
    x0 = (A[4] * rhs0 - A[1] * rhs1) / det
    y0 = (-A[3] * rhs0 + A[0] * rhs1) / det
    x1 = -(A[4] * A[2] - A[1] * A[5]) / det
    y1 = -(-A[3] * A[2] + A[0] * A[5]) / det
    dx = x0 - C[0]
    dy = y0 - C[1]
    qa = x1 * x1 + y1 * y1 + 1.0
    qb = 2.0 * (dx * x1 + dy * y1 - C[2])
    qc = dx * dx + dy * dy + C[2] * C[2] - lb * lb
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return 1
    sq = sqrt(disc)
    if sq / (2.0 * qa) < 1e-9:
        return 2
    z = (-qb + sq) / (2.0 * qa)
    Px = x0 + x1 * z
    Py = y0 + y1 * z
    Pz = z
    F0[0] = 0.0
    F0[1] = 0.0
    F0[2] = 0.0
    for i in range(3):
        vx = (Px - la * ct[i] * p[5 + i] + (b - a) * p[5 + i]) / lb
        vy = (Py - la * ct[i] * p[8 + i] + (b - a) * p[8 + i]) / lb
        vz = (Pz - la * st[i]) / lb
        vloc = vx * p[5 + i] + vy * p[8 + i]
        den = la * (vloc * st[i] - vz * ct[i])
        if fabs(den) <= 1e-9:
            return 3
        mag = p[11 + i] * th_e[i] / den
        F0[0] -= mag * vx
        F0[1] -= mag * vy
        F0[2] -= mag * vz
    for i in range(3):
        M0[i] = p[14 + i] * th_e[3 + i]
    _rot_zxy(th_e[5], th_e[3], th_e[4], R)
    for i in range(3):
        out[i] = R[i] * F0[0] + R[3 + i] * F0[1] + R[6 + i] * F0[2]
        out[3 + i] = R[i] * M0[0] + R[3 + i] * M0[1] + R[6 + i] * M0[2]
    return 0


def wrench_batch(const double[:, ::1] theta_e, const double[::1] packed):
    cdef Py_ssize_t n = theta_e.shape[0], r, j
    out_arr = np.empty((n, 6))
    status_arr = np.zeros(n, dtype=np.int8)
    cdef double[:, ::1] out = out_arr
    cdef signed char[::1] status = status_arr
    cdef int code
    with nogil:
        for r in range(n):
            code = _wrench_row(&theta_e[r, 0], &packed[0], &out[r, 0])
            status[r] = code
            if code != 0:
                for j in range(6):
                    out[r, j] = NAN
    return out_arr, status_arr


def rotated_extrema(F0, R):
    cdef double[:, ::1] f = np.ascontiguousarray(F0, dtype=float)
    cdef double[:, :, ::1] rot = np.ascontiguousarray(R, dtype=float)
    cdef Py_ssize_t n = f.shape[0], m = rot.shape[0], a, b
    cdef int i
    cdef double v
    cdef double lo[3]
    cdef double hi[3]
    for i in range(3):
        lo[i] = INFINITY
        hi[i] = -INFINITY
    with nogil:
        for a in range(n):
            if not (isfinite(f[a, 0]) and isfinite(f[a, 1]) and isfinite(f[a, 2])):
                continue
            for b in range(m):
                for i in range(3):
                    v = rot[b, 0, i] * f[a, 0] + rot[b, 1, i] * f[a, 1] + rot[b, 2, i] * f[a, 2]
                    if v < lo[i]:
                        lo[i] = v
                    if v > hi[i]:
                        hi[i] = v
    return np.array([lo[0], lo[1], lo[2]]), np.array([hi[0], hi[1], hi[2]])


def rotated_diff_maxnorm(Fa, Ra, Fb, Rb):
    cdef double[:, ::1] fa = np.ascontiguousarray(Fa, dtype=float)
    cdef double[:, ::1] fb = np.ascontiguousarray(Fb, dtype=float)
    cdef double[:, :, ::1] ra = np.ascontiguousarray(Ra, dtype=float)
    cdef double[:, :, ::1] rb = np.ascontiguousarray(Rb, dtype=float)
    cdef Py_ssize_t n = fa.shape[0], m = ra.shape[0], a, b
    cdef int i
    cdef double d, s, best = 0.0
    with nogil:
        for a in range(n):
            if not (isfinite(fa[a, 0]) and isfinite(fa[a, 1]) and isfinite(fa[a, 2])
                    and isfinite(fb[a, 0]) and isfinite(fb[a, 1]) and isfinite(fb[a, 2])):
                continue
            for b in range(m):
                s = 0.0
                for i in range(3):
                    d = (rb[b, 0, i] * fb[a, 0] + rb[b, 1, i] * fb[a, 1] + rb[b, 2, i] * fb[a, 2]
                         - ra[b, 0, i] * fa[a, 0] - ra[b, 1, i] * fa[a, 1] - ra[b, 2, i] * fa[a, 2])
                    s += d * d
                if s > best:
                    best = s
    return sqrt(best)


def play(u, h, y0):
    cdef double[:, ::1] uu = np.ascontiguousarray(np.asarray(u, dtype=float).reshape(len(u), -1))
    cdef Py_ssize_t T = uu.shape[0], C = uu.shape[1], t, c
    cdef double[::1] hh = np.array(np.broadcast_to(np.asarray(h, dtype=float), (C,)), dtype=float)
    cdef double[::1] prev = np.array(np.broadcast_to(np.asarray(y0, dtype=float), (C,)), dtype=float)
    out_arr = np.empty((T, C))
    cdef double[:, ::1] y = out_arr
    cdef double lo, hi
    with nogil:
        for t in range(T):
            for c in range(C):
                lo = uu[t, c] - hh[c]
                hi = uu[t, c] + hh[c]
                if prev[c] < lo:
                    prev[c] = lo
                elif prev[c] > hi:
                    prev[c] = hi
                y[t, c] = prev[c]
    return out_arr.reshape(np.shape(u))
