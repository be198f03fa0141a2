import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobilisim.errors import ZeroAxis
from mobilisim.spatial import (SpatialInertia, Transform, axis_angle_to_quaternion,
                               compose, crf, crm, quat_multiply, quat_rotate,
                               quat_to_matrix, skew, spatial_transform,
                               spatial_transform_force, transform_point)
from oracles import hom, rodrigues


def rand_transform(rng) -> Transform:
    return Transform(rotation=rng.normal(size=4), translation=rng.uniform(-2, 2, 3))


class TestCompose:
    def test_identity_pair(self):
        assert compose(Transform.identity(), Transform.identity()).approx_eq(
            Transform.identity(), 1e-15)

    def test_group_inverse(self, rng):
        for _ in range(20):
            t = rand_transform(rng)
            assert compose(t, t.inverse()).approx_eq(Transform.identity(), 1e-12)

    def test_rotation_then_translation_on_point(self):
        # rotate about z by pi/2 first, then translate by (1,0,0); the
        # homogeneous-matrix product is the oracle
        rot = Transform.from_axis_angle((0, 0, 1), math.pi / 2)
        trans = Transform(translation=(1.0, 0.0, 0.0))
        combined = compose(trans, rot)
        got = transform_point(combined, (1.0, 0.0, 0.0))
        oracle = hom(np.eye(3), (1, 0, 0)) @ hom(rodrigues((0, 0, 1), math.pi / 2), np.zeros(3))
        expect = (oracle @ np.array([1.0, 0.0, 0.0, 1.0]))[:3]
        np.testing.assert_allclose(got, expect, atol=1e-12)
        np.testing.assert_allclose(got, [1.0, 1.0, 0.0], atol=1e-12)

    def test_matches_matrix_product_on_random_pairs(self, rng):
        for _ in range(50):
            a, b = rand_transform(rng), rand_transform(rng)
            got = compose(a, b).matrix4()
            want = a.matrix4() @ b.matrix4()
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_rotation_renormalized(self, rng):
        t = Transform(rotation=np.array([2.0, 0.0, 0.0, 0.0]))
        assert abs(np.linalg.norm(t.rotation) - 1.0) < 1e-9
        c = compose(rand_transform(rng), rand_transform(rng))
        assert abs(np.linalg.norm(c.rotation) - 1.0) < 1e-9


class TestTransformPoint:
    def test_identity(self):
        np.testing.assert_allclose(
            transform_point(Transform.identity(), (1.0, 2.0, 3.0)), [1, 2, 3])

    def test_pure_translation(self):
        t = Transform(translation=(0.0, 0.0, 5.0))
        np.testing.assert_allclose(transform_point(t, (0.0, 0.0, 0.0)), [0, 0, 5])

    def test_rot_z_90(self):
        t = Transform.from_axis_angle((0, 0, 1), math.pi / 2)
        np.testing.assert_allclose(transform_point(t, (1.0, 0.0, 0.0)),
                                   [0.0, 1.0, 0.0], atol=1e-12)

    def test_norm_preserving_for_pure_rotations(self, rng):
        for _ in range(50):
            t = Transform(rotation=rng.normal(size=4))
            p = rng.uniform(-3, 3, 3)
            assert abs(np.linalg.norm(t.apply(p)) - np.linalg.norm(p)) < 1e-12


class TestAxisAngle:
    def test_zero_angle_any_axis(self, rng):
        for _ in range(5):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            q = axis_angle_to_quaternion(axis, 0.0)
            np.testing.assert_allclose(q, [1, 0, 0, 0], atol=1e-15)

    def test_z_pi_half_angle_form(self):
        np.testing.assert_allclose(axis_angle_to_quaternion((0, 0, 1), math.pi),
                                   [0, 0, 0, 1], atol=1e-12)

    def test_zero_axis_raises(self):
        with pytest.raises(ZeroAxis):
            axis_angle_to_quaternion((0.0, 0.0, 1e-12), 1.0)

    def test_roundtrip_through_rotation_matrix(self, rng):
        for _ in range(100):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-math.pi, math.pi)
            q = axis_angle_to_quaternion(axis, angle)
            np.testing.assert_allclose(quat_to_matrix(q), rodrigues(axis, angle),
                                       atol=1e-12)


def test_quaternion_composition_matches_matrix_composition(rng):
    # acceptance-sized property: 1,000 random pairs within 1e-12
    for _ in range(1000):
        qa = rng.normal(size=4)
        qa /= np.linalg.norm(qa)
        qb = rng.normal(size=4)
        qb /= np.linalg.norm(qb)
        np.testing.assert_allclose(quat_to_matrix(quat_multiply(qa, qb)),
                                   quat_to_matrix(qa) @ quat_to_matrix(qb), atol=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.floats(-math.pi, math.pi))
@settings(max_examples=60, deadline=None)
def test_quat_rotate_matches_matrix(axis, angle):
    a = np.asarray(axis)
    if np.linalg.norm(a) < 1e-3:
        return
    q = axis_angle_to_quaternion(a / np.linalg.norm(a), angle)
    v = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)


class TestSpatialInertia:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError):
            SpatialInertia(0.0)

    def test_rejects_asymmetric(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ValueError):
            SpatialInertia(1.0, inertia=bad)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            SpatialInertia(1.0, inertia=-np.eye(3))

    def test_matrix66_point_mass(self):
        si = SpatialInertia(2.0, com=(0.0, 0.0, 1.0), inertia=np.zeros((3, 3)))
        m = si.matrix66()
        np.testing.assert_allclose(m[3:, 3:], 2.0 * np.eye(3))
        np.testing.assert_allclose(m[:3, 3:], 2.0 * skew((0, 0, 1)))
        # parallel-axis term about the origin
        np.testing.assert_allclose(m[:3, :3], 2.0 * np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_spatial_transform_duality(rng):
    # force transform is the inverse-transpose of the motion transform
    for _ in range(20):
        t = rand_transform(rng)
        xm = spatial_transform(t)
        xf = spatial_transform_force(t)
        np.testing.assert_allclose(xf, np.linalg.inv(xm).T, atol=1e-10)


def test_cross_operators_antisymmetry(rng):
    v = rng.normal(size=6)
    np.testing.assert_allclose(crf(v), -crm(v).T, atol=1e-15)
    m = rng.normal(size=6)
    np.testing.assert_allclose(crm(v) @ m, -(crm(m) @ v), atol=1e-12)
