import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from delta6 import kernels
from delta6.estimator import estimate_wrench_batch
from delta6.geometry import DesignParams, euler_zxy_to_rot_batch

BACKENDS = kernels.available()


def play_reference(u, h, y0):
    y = np.empty_like(u)
    prev = np.array(y0, dtype=float)
    for n, row in enumerate(u):
        prev = np.minimum(np.maximum(prev, row - h), row + h)
        y[n] = prev
    return y


def rotations(rng, m):
    a = rng.uniform(-0.5, 0.5, (m, 3))
    return euler_zxy_to_rot_batch(a[:, 0], a[:, 1], a[:, 2])


def test_compiled_available():
    # the build ships the extension; the fallback must still exist
    assert "python" in BACKENDS
    assert "compiled" in BACKENDS
    assert kernels.BACKEND in BACKENDS


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


@pytest.mark.parametrize("flag,want", [("1", "python"), ("0", "compiled")])
def test_env_selects_fallback(flag, want):
    env = dict(os.environ, DELTA6_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "from delta6 import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == want


def test_pack_params_layout():
    p = DesignParams()
    v = kernels.pack_params(p)
    assert v.shape == (17,) and v.flags.c_contiguous
    assert v[:5].tolist() == [p.a, p.b, p.l_a, p.l_b, p.theta_offset]
    assert np.allclose(v[5:8] ** 2 + v[8:11] ** 2, 1)


def test_wrench_batch_agree(rng):
    th = rng.uniform(-0.55, 0.55, (2000, 6))
    packed = kernels.pack_params(DesignParams())
    outs = [kernels.get(b).wrench_batch(th, packed) for b in BACKENDS]
    for w, s in outs[1:]:
        assert np.array_equal(s, outs[0][1])
        ok = s == kernels.STATUS_OK
        assert np.allclose(w[ok], outs[0][0][ok], rtol=1e-12, atol=1e-13)


def test_wrench_status_unreachable():
    packed = kernels.pack_params(DesignParams(l_b=0.045))
    for b in BACKENDS:
        w, s = kernels.get(b).wrench_batch(np.zeros((3, 6)), packed)
        assert (s == kernels.STATUS_UNREACHABLE).all() and np.isnan(w).all()


def test_non_contiguous_input(rng):
    th = np.asfortranarray(rng.uniform(-0.3, 0.3, (50, 6)))
    a = estimate_wrench_batch(th, DesignParams())
    b = estimate_wrench_batch(np.ascontiguousarray(th), DesignParams())
    assert np.array_equal(a, b)


@given(hnp.arrays(float, (7, 3), elements=st.floats(-50, 50)), st.integers(0, 2**32 - 1))
def test_rotated_extrema_brute(F0, seed):
    R = rotations(np.random.default_rng(seed), 5)
    allv = np.einsum("mji,nj->mni", R, F0).reshape(-1, 3)
    for b in BACKENDS:
        lo, hi = kernels.get(b).rotated_extrema(F0, R)
        assert np.allclose(lo, allv.min(axis=0), atol=1e-12)
        assert np.allclose(hi, allv.max(axis=0), atol=1e-12)


@given(hnp.arrays(float, (6, 3), elements=st.floats(-50, 50)), st.integers(0, 2**32 - 1))
def test_rotated_diff_brute(F0, seed):
    rng = np.random.default_rng(seed)
    Ra, Rb = rotations(rng, 4), rotations(rng, 4)
    Fb = F0 + rng.normal(size=F0.shape)
    d = np.einsum("mji,nj->mni", Rb, Fb) - np.einsum("mji,nj->mni", Ra, F0)
    want = np.linalg.norm(d, axis=2).max()
    for b in BACKENDS:
        assert kernels.get(b).rotated_diff_maxnorm(F0, Ra, Fb, Rb) == pytest.approx(want, rel=1e-12)


@given(hnp.arrays(float, (40, 3), elements=st.floats(-1, 1)),
       st.tuples(*[st.floats(0, 0.3)] * 3), st.tuples(*[st.floats(-1, 1)] * 3))
def test_play_matches_reference(u, h, y0):
    h, y0 = np.array(h), np.array(y0)
    want = play_reference(u, h, y0)
    for b in BACKENDS:
        assert np.array_equal(kernels.get(b).play(u, h, y0), want)
