import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from delta6.geometry import (DesignParams, GimbalLock, JointRangeError, KinematicState,
                             RigidTransform, Unreachable, check_joint_range, euler_xyz_to_rot,
                             euler_zxy_to_rot, euler_zxy_to_rot_batch, fk_delta, fk_delta_batch,
                             ik_delta, rot_to_euler_xyz, rot_to_euler_zxy, rot_z, sphere_centers)

# numeric three-sphere solve (tests/oracles.py) at the neutral pose
P_NEUTRAL_Z = 0.10430104649594897

small = st.floats(-math.pi / 6, math.pi / 6, allow_nan=False)
joint = st.floats(-0.45, 0.45, allow_nan=False)


def _orthonormal(R, tol=1e-12):
    return np.abs(R.T @ R - np.eye(3)).max() < tol and abs(np.linalg.det(R) - 1) < tol


class TestRotations:
    def test_rot_z_identity_and_half_turn(self):
        assert np.array_equal(rot_z(0.0), np.eye(3))
        assert np.allclose(rot_z(math.pi), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)

    def test_rot_z_third_turn_on_x(self):
        assert np.allclose(rot_z(2 * math.pi / 3) @ [1, 0, 0], [-0.5, math.sqrt(3) / 2, 0], atol=1e-15)

    def test_zxy_reductions(self):
        assert np.array_equal(euler_zxy_to_rot(0, 0, 0), np.eye(3))
        assert np.allclose(euler_zxy_to_rot(math.pi / 6, 0, 0), rot_z(math.pi / 6), atol=1e-15)

    def test_zxy_matches_independent_product(self):
        z, x, y = 0.3, -0.2, 0.4
        ref = oracles.rz(z) @ oracles.rx(x) @ oracles.ry(y)
        assert np.allclose(euler_zxy_to_rot(z, x, y), ref, atol=1e-15)

    @given(small, small, small)
    def test_zxy_round_trip(self, z, x, y):
        R = euler_zxy_to_rot(z, x, y)
        assert _orthonormal(R)
        assert np.allclose(rot_to_euler_zxy(R), (z, x, y), atol=1e-10, rtol=0)

    @given(small, small, small)
    def test_batch_matches_scalar(self, z, x, y):
        assert np.allclose(euler_zxy_to_rot_batch(z, x, y), euler_zxy_to_rot(z, x, y), atol=1e-15)

    @given(small, small, small)
    def test_xyz_round_trip(self, a, b, c):
        R = euler_xyz_to_rot(a, b, c)
        assert _orthonormal(R)
        assert np.allclose(rot_to_euler_xyz(R), (a, b, c), atol=1e-10, rtol=0)

    def test_gimbal_lock(self):
        with pytest.raises(GimbalLock):
            rot_to_euler_zxy(euler_zxy_to_rot(0.1, math.pi / 2, 0.2))


class TestRigidTransform:
    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]))

    def test_chain_and_inverse(self, rng):
        a = RigidTransform.from_pose6(rng.uniform(-0.3, 0.3, 6), "E", "B")
        b = RigidTransform.from_pose6(rng.uniform(-0.3, 0.3, 6), "B", "M")
        ab = b @ a
        assert (ab.frame_from, ab.frame_to) == ("E", "M")
        ident = ab.inverse() @ ab
        assert np.allclose(ident.as_matrix(), np.eye(4), atol=1e-12)
        p = rng.normal(size=(5, 3))
        assert np.allclose(ab.apply(p), b.apply(a.apply(p)), atol=1e-15)

    def test_frame_mismatch(self):
        a = RigidTransform.identity("E", "B")
        with pytest.raises(ValueError):
            a @ RigidTransform.identity("T", "M")

    def test_pose6_round_trip(self, rng):
        X = rng.uniform(-0.4, 0.4, 6)
        assert np.allclose(RigidTransform.from_pose6(X).as_pose6(), X, atol=1e-12)


class TestDesignParams:
    def test_defaults(self, params):
        assert params.phi == pytest.approx((0, 2 * math.pi / 3, 4 * math.pi / 3))
        assert params.encoder_quantum == pytest.approx(3.8349e-4, rel=1e-4)
        assert params.joint_range == pytest.approx(math.pi / 6)

    @pytest.mark.parametrize("kw", [dict(a=0), dict(k=-1), dict(l_b=0.03), dict(phi=(0, 1))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DesignParams(**kw)

    def test_dict_round_trip(self, params):
        p2 = DesignParams.from_dict(params.with_stiffness(0.7).to_dict())
        assert p2 == params.with_stiffness(0.7)

    def test_joint_range_check(self, params):
        check_joint_range(np.full(6, params.joint_range), params)
        with pytest.raises(JointRangeError):
            check_joint_range([0, 0, 0, 0, 0, 0.53], params)


class TestForwardKinematics:
    def test_neutral_golden(self, params):
        P = fk_delta(np.full(3, params.theta_offset), params)
        assert np.allclose(P[:2], 0, atol=1e-12)
        assert P[2] == pytest.approx(P_NEUTRAL_Z, abs=1e-12)

    def test_neutral_against_numeric_solver(self, params):
        th = np.full(3, params.theta_offset)
        assert np.allclose(fk_delta(th, params), oracles.fk_numeric(th), atol=1e-12)

    @given(st.tuples(joint, joint, joint))
    def test_matches_numeric_solver(self, th):
        th = np.array(th) + math.pi / 6
        assert np.allclose(fk_delta(th, DesignParams()), oracles.fk_numeric(th), atol=1e-10)

    @given(st.tuples(joint, joint, joint))
    def test_link_length_residual(self, th):
        p = DesignParams()
        th = np.array(th) + p.theta_offset
        P = fk_delta(th, p)
        d = np.linalg.norm(P - sphere_centers(th, p), axis=1)
        assert np.abs(d - p.l_b).max() < 1e-9

    @given(st.tuples(joint, joint, joint))
    def test_cyclic_permutation_rotates(self, th):
        p = DesignParams()
        th = np.array(th) + p.theta_offset
        P = fk_delta(th, p)
        Pc = fk_delta(np.roll(th, 1), p)
        assert np.allclose(Pc, rot_z(2 * math.pi / 3) @ P, atol=1e-9)

    @given(st.tuples(joint, joint, joint))
    def test_fk_ik_round_trip(self, th):
        p = DesignParams()
        th = np.array(th) + p.theta_offset
        assert np.allclose(ik_delta(fk_delta(th, p), p), th, atol=1e-9)

    def test_round_trip_bulk(self, params, rng):
        th = rng.uniform(-params.joint_range, params.joint_range, (10_000, 3)) + params.theta_offset
        P, ok = fk_delta_batch(th, params)
        assert ok.all()
        back = np.array([ik_delta(p, params) for p in P])
        assert np.abs(back - th).max() < 1e-9

    def test_ik_neutral_and_axis(self, params):
        P0 = fk_delta(np.full(3, params.theta_offset), params)
        assert np.allclose(ik_delta(P0, params), params.theta_offset, atol=1e-12)
        th = ik_delta([0, 0, 0.11], params)
        assert np.ptp(th) < 1e-12

    def test_unreachable(self, params):
        with pytest.raises(Unreachable):
            ik_delta([0.5, 0, 0.1], params)
        with pytest.raises(Unreachable):
            fk_delta(np.full(3, params.theta_offset), DesignParams(l_b=0.045))

    def test_kinematic_state(self, params):
        ks = KinematicState.from_joints([0, 0, 0, 0.1, 0.2, 0.3], params)
        assert ks.euler_zxy == (0.3, 0.1, 0.2)
        assert ks.P[2] == pytest.approx(P_NEUTRAL_Z)
