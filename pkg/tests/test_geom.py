import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softterrain.geom import (BezierCubic, Transform, bezier_eval, bezier_sample, de_casteljau, euler_to_matrix,
                              euler_to_quat, gravity_in_base, matrix_to_euler, quat_to_euler, rot_x, rot_y, rot_z,
                              wrap_angle)

angles = st.floats(-math.pi + 1e-6, math.pi, allow_nan=False)
pitches = st.floats(-math.pi / 2 + 0.1, math.pi / 2 - 0.1)


def test_bezier_constant_curve():
    c = BezierCubic.constant((1.0, 2.0, 3.0))
    np.testing.assert_allclose(bezier_eval(c, 0.7), [1, 2, 3])


def test_bezier_endpoints(rng):
    P = rng.normal(size=(4, 3))
    c = BezierCubic(*P)
    np.testing.assert_allclose(bezier_eval(c, 0.0), P[0])
    np.testing.assert_allclose(bezier_eval(c, 1.0), P[3])


def test_bezier_midpoint_by_hand():
    c = BezierCubic((0, 0, 0), (0, 0, 0), (1, 1, 1), (1, 1, 1))
    np.testing.assert_allclose(bezier_eval(c, 0.5), [0.5, 0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("t", [-0.01, 1.0001, float("nan")])
def test_bezier_domain(t):
    with pytest.raises(ValueError):
        bezier_eval(BezierCubic.constant((0, 0, 0)), t)


def test_bezier_sample_two_points():
    c = BezierCubic((0, 0, 0), (0, 0, 0), (1, 0, 0), (1, 0, 0))
    np.testing.assert_allclose(bezier_sample(c, 2), [[0.5, 0, 0], [1, 0, 0]], atol=1e-15)


def test_bezier_sample_excludes_start(rng):
    c = BezierCubic(*rng.normal(size=(4, 3)))
    s = bezier_sample(c, 180)
    assert s.shape == (180, 3)
    np.testing.assert_allclose(s[-1], c.p3, atol=1e-15)
    np.testing.assert_allclose(s[0], bezier_eval(c, 1 / 180))
    np.testing.assert_allclose(bezier_sample(BezierCubic.constant((1, 2, 3)), 180), np.tile([1.0, 2.0, 3.0], (180, 1)), atol=1e-14)
    with pytest.raises(ValueError):
        bezier_sample(c, 1)


def test_bezier_matches_de_casteljau(rng):
    for _ in range(1000):
        c = BezierCubic(*rng.uniform(-1, 1, size=(4, 3)))
        t = rng.uniform()
        assert np.max(np.abs(bezier_eval(c, t) - de_casteljau(c, t))) < 1e-12


def test_bezier_convex_hull(rng):
    for _ in range(1000):
        P = rng.uniform(-1, 1, size=(4, 3))
        x = bezier_eval(BezierCubic(*P), rng.uniform())
        assert np.all(x >= P.min(axis=0) - 1e-12) and np.all(x <= P.max(axis=0) + 1e-12)


def test_bezier_rejects_nonfinite():
    with pytest.raises(ValueError):
        BezierCubic((0, 0, float("nan")), (0, 0, 0), (0, 0, 0), (0, 0, 0))


def test_gravity_identity_and_roll():
    np.testing.assert_allclose(gravity_in_base(Transform.from_euler((0, 0, 0))), [0, 0, -1])
    np.testing.assert_allclose(gravity_in_base(Transform.from_euler((math.pi, 0, 0))), [0, 0, 1], atol=1e-15)


def test_gravity_nose_down_pitch():
    # positive pitch about +y tilts the nose down, so gravity gains a +x base component
    g = gravity_in_base(Transform.from_euler((0, math.pi / 2, 0)))
    np.testing.assert_allclose(np.abs(g), [1, 0, 0], atol=1e-12)
    assert abs(np.linalg.norm(g) - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(angles, pitches, angles)
def test_euler_quaternion_round_trip(r, p, y):
    rpy = np.array([r, p, y])
    back = quat_to_euler(euler_to_quat(rpy))
    assert np.max(np.abs(wrap_angle(back - rpy))) < 1e-9
    back = matrix_to_euler(euler_to_matrix(rpy))
    assert np.max(np.abs(wrap_angle(back - rpy))) < 1e-9


@settings(max_examples=200, deadline=None)
@given(angles, angles, angles)
def test_gravity_unit_norm(r, p, y):
    assert abs(np.linalg.norm(gravity_in_base(Transform.from_euler((r, p, y)))) - 1) < 1e-9


def test_euler_convention_is_z_y_x_product():
    rpy = (0.3, -0.2, 1.1)
    np.testing.assert_allclose(euler_to_matrix(rpy), rot_z(1.1) @ rot_y(-0.2) @ rot_x(0.3), atol=1e-15)


def test_transform_algebra(rng):
    a = Transform.from_euler(rng.uniform(-1, 1, 3), rng.normal(size=3))
    b = Transform.from_euler(rng.uniform(-1, 1, 3), rng.normal(size=3))
    p = rng.normal(size=3)
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose(a.apply_inverse(a.apply(p)), p, atol=1e-12)
    np.testing.assert_allclose(a.inverse().apply(p), a.apply_inverse(p), atol=1e-12)


def test_transform_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        Transform(np.array([1.0, 0.1, 0, 0]), np.zeros(3))


def test_wrap_angle_range():
    a = wrap_angle(np.array([-math.pi, math.pi, 3 * math.pi, 0.5]))
    assert np.all(a > -math.pi) and np.all(a <= math.pi)
