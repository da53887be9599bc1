import math

import numpy as np
import pytest

from softterrain.geom import Transform, rot_z
from softterrain.robot import (RobotModel, RobotState, UnreachableError, clamp_reach, fk_leg, fk_legs, ik_leg,
                               ik_legs_clamped, ik_pose)

# the knee limit keeps the leg slightly bent; these geometry checks need the straight leg
STRAIGHT_OK = RobotModel(joint_limits=np.array([[-0.8, 0.8], [-1.5, 1.5], [0.0, 2.6]]))


def random_angles(model, rng, n):
    lim = model.joint_limits
    return rng.uniform(lim[:, 0], lim[:, 1], size=(n, 3))


def test_model_totals(model):
    assert model.total_mass == pytest.approx(25.0)
    assert model.leg_length == pytest.approx(0.50)
    assert model.base_length == 0.55


def test_model_validation():
    with pytest.raises(ValueError):
        RobotModel(base_mass=0.0)
    with pytest.raises(ValueError):
        RobotModel(joint_limits=np.array([[1, 0], [0, 1], [0, 1]]))
    with pytest.raises(KeyError):
        RobotModel.from_dict({"nope": 1})


def test_fk_straight_leg(model):
    for leg in range(4):
        np.testing.assert_allclose(fk_leg(model, leg, (0, 0, 0)), model.hip_offsets[leg] + [0, 0, -0.5], atol=1e-15)


def test_fk_knee_right_angle(model):
    p = fk_leg(model, 0, (0, 0, math.pi / 2)) - model.hip_offsets[0]
    assert p[2] == pytest.approx(-model.l_upper, abs=1e-15)


def test_fk_abduction_quarter_turn(model):
    p = fk_leg(model, 1, (math.pi / 2, 0, 0)) - model.hip_offsets[1]
    assert np.linalg.norm(p) == pytest.approx(0.5)
    assert abs(p[2]) < 1e-12


def test_positive_pitch_moves_foot_forward(model):
    p = fk_leg(model, 0, (0, 0.2, 0)) - model.hip_offsets[0]
    assert p[0] > 0


def test_ik_straight_down_is_zero():
    for leg in range(4):
        q = ik_leg(STRAIGHT_OK, leg, STRAIGHT_OK.hip_offsets[leg] + [0, 0, -0.5])
        np.testing.assert_allclose(q, 0.0, atol=1e-7)


def reachable_targets(model, rng, n):
    """Targets produced by in-limit angles whose IK branch is also in limits."""
    out = []
    while len(out) < n:
        leg = int(rng.integers(4))
        q = random_angles(model, rng, 1)[0]
        target = fk_leg(model, leg, q)
        try:
            ik_leg(model, leg, target)
        except UnreachableError:
            continue  # other IK branch, outside the limits
        out.append((leg, target))
    return out


def test_ik_fk_round_trip_10k(model, rng):
    worst = 0.0
    for leg, target in reachable_targets(model, rng, 10_000):
        sol = ik_leg(model, leg, target)
        worst = max(worst, float(np.linalg.norm(fk_leg(model, leg, sol) - target)))
    assert worst < 1e-6


def test_ik_knee_backward_branch(model, rng):
    for leg, target in reachable_targets(model, rng, 200):
        assert ik_leg(model, leg, target)[2] >= 0


def test_ik_unreachable(model):
    with pytest.raises(UnreachableError) as e:
        ik_leg(model, 3, model.hip_offsets[3] + [0, 0, -0.51])
    assert e.value.leg == 3
    with pytest.raises(UnreachableError):
        ik_leg(model, 0, model.hip_offsets[0] + [0, 0, 0.2])  # above the hip


def test_ik_solutions_within_limits_or_error(model, rng):
    for _ in range(2000):
        target = model.hip_offsets[0] + rng.uniform(-0.5, 0.5, 3)
        try:
            q = ik_leg(model, 0, target)
        except UnreachableError:
            continue
        lim = model.joint_limits
        assert np.all(q >= lim[:, 0] - 1e-12) and np.all(q <= lim[:, 1] + 1e-12)


def test_fk_lipschitz(model, rng):
    for qi in random_angles(model, rng, 500):
        j = rng.integers(3)
        eps = rng.uniform(-1e-4, 1e-4)
        dq = np.zeros(3)
        dq[j] = eps
        move = np.linalg.norm(fk_leg(model, 0, qi + dq) - fk_leg(model, 0, qi))
        assert move <= model.leg_length * abs(eps) * 2


def test_ik_pose_identity(model):
    base = Transform.from_euler((0.05, -0.03, 0.2), (0.3, -0.1, 0.33))
    q = model.squat_angles.reshape(12)
    st = RobotState.from_pose(model, base, q)
    np.testing.assert_allclose(ik_pose(model, base, st.feet), q, atol=1e-6)


def test_ik_pose_raised_base_keeps_feet(model):
    base = Transform.from_euler((0, 0, 0), (0, 0, 0.33))
    feet = base.apply(model.default_feet)
    raised = Transform.from_euler((0, 0, 0), (0, 0, 0.35))
    q = ik_pose(model, raised, feet).reshape(4, 3)
    np.testing.assert_allclose(raised.apply(fk_legs(model, q)), feet, atol=1e-6)
    assert np.all(q[:, 2] < model.squat_angles[:, 2])  # knees open up


def test_ik_pose_yaw_rotates_targets(model):
    feet = model.default_feet
    yawed = Transform.from_euler((0, 0, math.radians(10)), (0, 0, 0))
    q = ik_pose(model, yawed, feet)
    expect = (rot_z(math.radians(-10)) @ feet.T).T
    np.testing.assert_allclose(fk_legs(model, q.reshape(4, 3)), expect, atol=1e-9)


def test_squat_pose(model):
    np.testing.assert_allclose(model.default_feet[:, :2], model.hip_offsets[:, :2], atol=1e-12)
    np.testing.assert_allclose(model.default_feet[:, 2], -(model.squat_height - model.foot_radius), atol=1e-12)


def test_clamped_ik_never_fails(model, rng):
    targets = model.hip_offsets + rng.uniform(-1, 1, size=(500, 4, 3))
    q = ik_legs_clamped(model, targets)
    assert np.all(np.isfinite(q))
    lim = model.joint_limits
    assert np.all(q >= lim[:, 0]) and np.all(q <= lim[:, 1])


def test_clamp_reach_ray(model):
    rel = np.array([0.0, 0.0, -0.8])
    out = clamp_reach(model, rel)
    assert np.linalg.norm(out) == pytest.approx(0.995 * model.leg_length)
    np.testing.assert_allclose(out / np.linalg.norm(out), rel / 0.8)


def test_clamped_matches_strict_inside(model, rng):
    q = random_angles(model, rng, 200)
    q[:, 2] = np.clip(q[:, 2], 0.3, 2.4)
    target = fk_legs(model, np.tile(q[:, None, :], (1, 4, 1)))
    inside = np.linalg.norm(target - model.hip_offsets, axis=-1) < 0.49
    got = ik_legs_clamped(model, target)
    ok = np.all(inside, axis=1) & (target[..., 2] < model.hip_offsets[:, 2] - 1e-3).all(axis=1)
    np.testing.assert_allclose(fk_legs(model, got[ok]), target[ok], atol=1e-9)
