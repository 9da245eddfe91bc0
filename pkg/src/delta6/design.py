"""Parametric design exploration: workspace, wrench envelope and resolution.

The sweep is split in two.  The platform force in {E0} depends only on
the three proximal deflections, and the wrist deflections only rotate it,
so a dense grid over joints 1..3 is crossed with a coarser grid over the
wrist joints 4..6.  All cross-product reductions run in the kernels.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kernels
from .geometry import DesignParams, euler_zxy_to_rot_batch, fk_delta_batch

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class SpecReport:
    """Computed specification of one design.

    ``f_res``/``m_res`` are the worst-case wrench-increment norms for a
    one-quantum step on any single joint; the ``*_simultaneous`` variants
    step all six joints at once.
    """

    workspace_aabb: tuple[float, float, float]
    f_range: tuple[tuple[float, float], ...]
    m_range: tuple[tuple[float, float], ...]
    f_res: float
    m_res: float
    f_res_simultaneous: float
    m_res_simultaneous: float
    f_max_norm: float
    m_max_norm: float
    grid_density: int
    wrist_density: int
    skipped: int
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def flat(self) -> dict:
        """One-level dict, used for CSV rows (SI units)."""
        row = {}
        for ax, e in zip(AXES, self.workspace_aabb):
            row[f"workspace_{ax}_m"] = e
        for ax, (lo, hi) in zip(AXES, self.f_range):
            row[f"f{ax}_min_N"], row[f"f{ax}_max_N"] = lo, hi
        for ax, (lo, hi) in zip(AXES, self.m_range):
            row[f"m{ax}_min_Nm"], row[f"m{ax}_max_Nm"] = lo, hi
        row.update(f_max_norm_N=self.f_max_norm, m_max_norm_Nm=self.m_max_norm,
                   f_res_N=self.f_res, m_res_Nm=self.m_res,
                   f_res_simultaneous_N=self.f_res_simultaneous,
                   m_res_simultaneous_Nm=self.m_res_simultaneous,
                   grid_density=self.grid_density, wrist_density=self.wrist_density,
                   skipped=self.skipped)
        return row


def _platform_forces(theta_123e: np.ndarray, params: DesignParams, backend) -> np.ndarray:
    """Force in {E0} for proximal deflections (N, 3); wrist joints at zero."""
    th = np.zeros((theta_123e.shape[0], 6))
    th[:, :3] = theta_123e
    out, _ = kernels.get(backend).wrench_batch(th, kernels.pack_params(params))
    return out[:, :3]


def compute_spec(params: DesignParams, grid_density: int = 41, wrist_density: int = 7,
                 *, backend: str | None = None) -> SpecReport:
    if grid_density < 11:
        raise ValueError("grid_density must be at least 11")
    if wrist_density < 2:
        raise ValueError("wrist_density must be at least 2")
    t0 = time.perf_counter()
    kern = kernels.get(backend)
    q = params.encoder_quantum
    lim = params.joint_range
    g = np.linspace(-lim, lim, grid_density)
    gw = np.linspace(-lim, lim, wrist_density)
    T123 = np.array(list(itertools.product(g, g, g)))
    T456 = np.array(list(itertools.product(gw, gw, gw)))

    P, ok = fk_delta_batch(T123 + params.theta_offset, params)
    F0 = _platform_forces(T123, params, backend)
    ok &= np.all(np.isfinite(F0), axis=1)
    skipped = int((~ok).sum())
    if skipped == len(ok):
        raise ValueError("no grid point is reachable for this design")
    F0 = F0[ok]
    P = P[ok]
    aabb = tuple(float(v) for v in P.max(axis=0) - P.min(axis=0))

    # wrist rotations; R(E0 -> E) per (z, x, y) = (theta_e6, theta_e4, theta_e5)
    R = euler_zxy_to_rot_batch(T456[:, 2], T456[:, 0], T456[:, 1])
    f_lo, f_hi = kern.rotated_extrema(F0, R)
    M0 = T456 * params.stiffness[3:]
    ME = np.einsum("mji,mj->mi", R, M0)
    m_lo, m_hi = ME.min(axis=0), ME.max(axis=0)

    # per-joint one-quantum steps
    f_res = 0.0
    for j in range(3):
        dth = T123[ok].copy()
        dth[:, j] += q
        dF = _platform_forces(dth, params, backend) - F0
        f_res = max(f_res, float(np.nanmax(np.linalg.norm(dF, axis=1))))
    m_res = 0.0
    for j in range(3):
        t2 = T456.copy()
        t2[:, j] += q
        R2 = euler_zxy_to_rot_batch(t2[:, 2], t2[:, 0], t2[:, 1])
        # force: rotation alone changes the {E} components
        f_res = max(f_res, kern.rotated_diff_maxnorm(F0, R, F0, R2))
        ME2 = np.einsum("mji,mj->mi", R2, t2 * params.stiffness[3:])
        m_res = max(m_res, float(np.linalg.norm(ME2 - ME, axis=1).max()))

    # all six joints stepped together
    F0s = _platform_forces(T123[ok] + q, params, backend)
    Ts = T456 + q
    Rs = euler_zxy_to_rot_batch(Ts[:, 2], Ts[:, 0], Ts[:, 1])
    f_res_sim = kern.rotated_diff_maxnorm(F0, R, F0s, Rs)
    MEs = np.einsum("mji,mj->mi", Rs, Ts * params.stiffness[3:])
    m_res_sim = float(np.linalg.norm(MEs - ME, axis=1).max())

    return SpecReport(
        workspace_aabb=aabb,
        f_range=tuple((float(lo), float(hi)) for lo, hi in zip(f_lo, f_hi)),
        m_range=tuple((float(lo), float(hi)) for lo, hi in zip(m_lo, m_hi)),
        f_res=f_res, m_res=m_res,
        f_res_simultaneous=float(f_res_sim), m_res_simultaneous=m_res_sim,
        # rotation preserves norms, so the maxima come from the unrotated sets
        f_max_norm=float(np.linalg.norm(F0, axis=1).max()),
        m_max_norm=float(np.linalg.norm(M0, axis=1).max()),
        grid_density=grid_density, wrist_density=wrist_density, skipped=skipped,
        elapsed_s=time.perf_counter() - t0,
    )


def baseline_params() -> DesignParams:
    """Prototype parameters (k = 0.64 N·m/rad)."""
    return DesignParams()


def reference_variants() -> list[DesignParams]:
    """Baseline, half-scale, stiffer springs (k x1.5), and both combined."""
    base = replace(DesignParams(), k=0.639)
    return [base, base.scaled(0.5), base.with_stiffness(1.5 * base.k),
            base.scaled(0.5).with_stiffness(1.5 * base.k)]


RATIO_FIELDS = ("f_max_norm", "m_max_norm", "f_res", "m_res")


def compare_variants(variants, grid_density: int = 41, wrist_density: int = 7,
                     *, backend: str | None = None):
    """One report per variant plus figure ratios against the first."""
    variants = list(variants)
    if not variants:
        raise ValueError("need at least one variant")
    reports = [compute_spec(p, grid_density, wrist_density, backend=backend) for p in variants]
    base = reports[0]
    ratios = []
    for r in reports:
        row = {f: getattr(r, f) / getattr(base, f) for f in RATIO_FIELDS}
        row["workspace"] = math.prod(r.workspace_aabb) ** (1 / 3) / math.prod(base.workspace_aabb) ** (1 / 3)
        ratios.append(row)
    return reports, ratios
