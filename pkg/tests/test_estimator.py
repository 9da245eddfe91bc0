import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from delta6 import kernels
from delta6.estimator import (Degenerate, FrameMismatch, SingularBranch, Wrench, branch_force,
                              branch_states, branch_vector, calibrate_spring, estimate_wrench,
                              estimate_wrench_batch, estimate_wrench_e0, wrench_transform,
                              wrench_transform_inverse)
from delta6.geometry import DesignParams, JointRangeError, euler_xyz_to_rot, fk_delta, rot_z
from delta6.plant import play_operator

# independent re-implementation (tests/oracles.py), theta_e1..3 = 0.05
FZ_005 = 1.743755927698171
# branch 1 midline at the neutral pose
V1_NEUTRAL = (-0.0854010162, 0.0, 0.0843010465)

defl = st.floats(-0.45, 0.45, allow_nan=False)
six = st.tuples(*[defl] * 6)


class TestBranch:
    def test_neutral_branch_vector(self, params):
        th = params.theta_offset
        P = fk_delta(np.full(3, th), params)
        v1 = branch_vector(0, th, P, params)
        assert v1[1] == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(v1, V1_NEUTRAL, atol=1e-10)
        for i in range(3):
            assert np.linalg.norm(branch_vector(i, th, P, params)) == pytest.approx(params.l_b, abs=1e-9)

    def test_bad_index(self, params):
        with pytest.raises(ValueError):
            branch_vector(3, 0.5, np.zeros(3), params)

    def test_zero_deflection_zero_force(self, params):
        mag, F = branch_force(0, 0.0, [0.6, 0.0, 0.8], params)
        assert mag == 0 and np.array_equal(F, np.zeros(3))

    def test_spring_torque_span(self):
        # one spring unit at full deflection (reference value is truncated, 0.33468)
        assert 0.6392 * math.pi / 6 == pytest.approx(0.3346, abs=1e-4)
        p = DesignParams(k=0.6392)
        st_ = branch_states([math.pi / 6, 0, 0, 0, 0, 0], p)
        assert st_[0].tau == pytest.approx(0.3346, abs=1e-4)

    def test_singular_branch(self, params):
        th = 0.7
        # linkage direction parallel to the lever r = (cos th, 0, sin th)
        with pytest.raises(SingularBranch):
            branch_force(0, 0.1, [math.cos(th), 0, math.sin(th)], params, theta_i=th)

    @given(st.tuples(defl, defl, defl))
    def test_unit_directions(self, th):
        s = branch_states(list(th) + [0, 0, 0], DesignParams())
        for b in s:
            assert np.linalg.norm(b.v) == pytest.approx(0.120, abs=1e-9)
            assert np.linalg.norm(b.v_hat) == pytest.approx(1.0, abs=1e-12)


class TestEstimate:
    def test_zero(self, params):
        w = estimate_wrench(np.zeros(6), params)
        assert np.array_equal(w.as_vector(), np.zeros(6)) and w.frame == "E"

    def test_twist_only(self, params):
        q = 0.2
        w = estimate_wrench([0, 0, 0, 0, 0, q], params)
        assert np.allclose(w.force, 0, atol=1e-15)
        assert np.allclose(w.moment, [0, 0, params.k * q], atol=1e-15)

    def test_pure_fz_golden(self, params):
        w = estimate_wrench([0.05, 0.05, 0.05, 0, 0, 0], params)
        assert np.abs(w.force[:2]).max() < 1e-12
        assert w.force[2] == pytest.approx(FZ_005, rel=1e-10)

    @given(six)
    def test_matches_independent_script(self, th):
        ref = oracles.wrench_reference(list(th))
        got = estimate_wrench(th, DesignParams()).as_vector()
        assert np.allclose(got, ref, atol=1e-9, rtol=1e-9)

    @given(st.tuples(*[st.floats(-0.1, 0.1)] * 3))
    def test_virtual_work(self, th):
        th = np.array(th)
        if np.abs(th).max() < 1e-3:
            th = th + 1e-2
        ref = oracles.virtual_work_forces(th)
        got = estimate_wrench_e0(list(th) + [0, 0, 0], DesignParams()).force
        assert np.linalg.norm(got - ref) <= 0.01 * np.linalg.norm(ref) + 1e-9

    @given(six, st.floats(0.1, 10))
    def test_k_homogeneity(self, th, s):
        p = DesignParams()
        a = estimate_wrench(th, p).as_vector()
        b = estimate_wrench(th, p.with_stiffness(p.k * s)).as_vector()
        assert np.allclose(b, s * a, rtol=1e-12, atol=1e-13)

    @given(st.tuples(defl, defl, defl))
    def test_cyclic_symmetry(self, th):
        p = DesignParams()
        w = estimate_wrench(list(th) + [0, 0, 0], p)
        wc = estimate_wrench(list(np.roll(th, 1)) + [0, 0, 0], p)
        assert np.allclose(wc.force, rot_z(2 * math.pi / 3) @ w.force, atol=1e-9)
        assert wc.moment[2] == pytest.approx(w.moment[2], abs=1e-9)

    def test_batch_and_backends_agree(self, params, rng):
        th = rng.uniform(-0.5, 0.5, (200, 6))
        ref = np.array([estimate_wrench(t, params).as_vector() for t in th])
        for b in kernels.available():
            assert np.allclose(estimate_wrench_batch(th, params, backend=b), ref, atol=1e-12)

    def test_range_enforced(self, params):
        with pytest.raises(JointRangeError):
            estimate_wrench([0.6, 0, 0, 0, 0, 0], params)
        with pytest.raises(JointRangeError):
            estimate_wrench_batch(np.full((2, 6), 0.6), params)

    def test_non_strict_flags_rows(self, params):
        bad = DesignParams(l_b=0.045)
        out = estimate_wrench_batch(np.zeros((2, 6)), bad, strict=False)
        assert np.isnan(out).all()


class TestCalibration:
    def test_exact_slope(self):
        th = np.linspace(-0.5, 0.5, 21)
        fit = calibrate_spring(th, 0.6392 * th)
        assert fit.k == pytest.approx(0.6392, rel=1e-14)
        assert fit.mse == pytest.approx(0, abs=1e-30) and fit.valid
        assert fit.intercept == pytest.approx(0, abs=1e-15)

    def test_zero_torque_invalid(self):
        fit = calibrate_spring(np.linspace(-0.5, 0.5, 5), np.zeros(5))
        assert fit.k == 0 and not fit.valid

    def test_degenerate(self):
        with pytest.raises(Degenerate):
            calibrate_spring([0.1, 0.1, 0.1], [1, 2, 3])

    def test_affine_detects_offset(self):
        th = np.linspace(-0.5, 0.5, 11)
        fit = calibrate_spring(th, 0.64 * (th + 0.02))
        assert fit.k_affine == pytest.approx(0.64) and fit.intercept == pytest.approx(0.0128)

    def test_hysteresis_loop(self):
        k0, h, rng_ = 0.64, 0.005, math.pi / 6
        t = np.linspace(0, 4, 4001)
        th = rng_ * np.sin(2 * math.pi * t)
        obs = play_operator(th[:, None], h)[:, 0]
        fit = calibrate_spring(obs, k0 * th)
        assert abs(fit.k - k0) <= k0 * h / rng_


class TestTransforms:
    def test_identity(self, rng):
        w = Wrench.from_vector(rng.normal(size=6), "T")
        out = wrench_transform(w, np.eye(3), np.zeros(3))
        assert np.array_equal(out.as_vector(), w.as_vector()) and out.frame == "E"

    def test_lever_arm(self):
        d, fx = 0.05, 3.0
        out = wrench_transform(Wrench([fx, 0, 0], [0, 0, 0], "T"), np.eye(3), [0, 0, d])
        assert abs(out.moment[1]) == pytest.approx(d * fx) and out.moment[[0, 2]].tolist() == [0, 0]

    @given(st.lists(st.floats(-10, 10), min_size=12, max_size=12))
    def test_round_trip(self, v):
        R = euler_xyz_to_rot(*np.array(v[6:9]) / 10)
        w = Wrench.from_vector(v[:6], "T")
        back = wrench_transform_inverse(wrench_transform(w, R, v[9:]), R, v[9:])
        assert np.allclose(back.as_vector(), w.as_vector(), atol=1e-12)

    def test_frame_tags(self):
        with pytest.raises(FrameMismatch):
            wrench_transform(Wrench.zero("E"), np.eye(3), np.zeros(3))
        with pytest.raises(FrameMismatch):
            Wrench.zero("E") + Wrench.zero("T")
        with pytest.raises(ValueError):
            Wrench([np.nan, 0, 0], [0, 0, 0])
        assert (Wrench.zero("T") - Wrench.zero("T")).frame == "T"
