"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled module ``_core`` (Cython) is used when it imports; otherwise,
or when ``DELTA6_PURE_PYTHON=1`` is set, the numpy implementation in
``_fallback`` is used.  Both expose the same functions:

``wrench_batch(theta_e, packed)``
    (N, 6) encoder rows -> ((N, 6) wrench rows in {E}, (N,) status codes)
``rotated_extrema(F0, R)``
    per-component min/max of ``R[m].T @ F0[n]`` over all pairs
``rotated_diff_maxnorm(Fa, Ra, Fb, Rb)``
    max over pairs of ``|Rb[m].T @ Fb[n] - Ra[m].T @ Fa[n]|``
``play(u, h, y0)``
    play (backlash) operator applied column-wise
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

STATUS_OK = 0
STATUS_UNREACHABLE = 1
STATUS_SINGULAR = 2
STATUS_SINGULAR_BRANCH = 3

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

if os.environ.get("DELTA6_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None):
    """Kernel module by name; ``None`` gives the import-time default."""
    name = BACKEND if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available()}") from None


def pack_params(params) -> np.ndarray:
    """Flatten DesignParams into the float vector the kernels read:
    [a, b, l_a, l_b, theta_offset, cos(phi) x3, sin(phi) x3, k x6]."""
    phi = np.asarray(params.phi, dtype=float)
    return np.ascontiguousarray(np.concatenate([
        [params.a, params.b, params.l_a, params.l_b, params.theta_offset],
        np.cos(phi), np.sin(phi), params.stiffness]), dtype=float)
