import numpy as np
import pytest

from softterrain.geom import Transform
from softterrain.gait import (ACTION_DIM, SWING_ORDER, ActionBounds, PhaseSchedule, PhaseStart, commanded_base,
                              commanded_end, decode_action, foot_targets_world, next_phase, phase_targets,
                              scale_action, tick_targets)
from softterrain.robot import fk_legs


def start_at(model, xy=(0.0, 0.0), yaw=0.0):
    base = Transform.from_euler((0, 0, yaw), (xy[0], xy[1], model.squat_height))
    return PhaseStart(base, base.apply(model.default_feet))


def test_zero_action_is_range_midpoint(model):
    plan = decode_action(np.zeros(ACTION_DIM), ActionBounds(), start_at(model), 0, model)
    np.testing.assert_allclose(plan.base_pos.p1, 0.0)
    np.testing.assert_allclose(plan.base_pos.p3, [0.02, 0.02, 0.02])
    np.testing.assert_allclose(plan.base_ori.p3, 0.0)


def test_full_action_is_upper_bound(model):
    plan = decode_action(np.ones(ACTION_DIM), ActionBounds(), start_at(model), 2, model)
    np.testing.assert_allclose(plan.base_pos.p2, 0.06)
    np.testing.assert_allclose(plan.base_pos.p3, 0.08)
    np.testing.assert_allclose([plan.base_ori.p1, plan.base_ori.p2, plan.base_ori.p3], 0.3)
    d = model.default_feet[2]
    # hind leg: frontal range shifted by -2 cm
    np.testing.assert_allclose(plan.swing_foot.p3, [d[0] + 0.13, d[1] + 0.15, d[2] + 0.15], atol=1e-12)


def test_out_of_range_components_clamped(model):
    a = np.full(ACTION_DIM, 7.0)
    p1 = decode_action(a, ActionBounds(), start_at(model), 0, model)
    p2 = decode_action(np.ones(ACTION_DIM), ActionBounds(), start_at(model), 0, model)
    np.testing.assert_array_equal(p1.base_pos.p3, p2.base_pos.p3)


def test_p0_is_current_value(model, rng):
    st = start_at(model, (0.4, -0.2), 0.3)
    for _ in range(20):
        leg = int(rng.integers(4))
        plan = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), st, leg, model)
        np.testing.assert_array_equal(plan.base_pos.p0, 0.0)
        np.testing.assert_array_equal(plan.base_ori.p0, 0.0)
        np.testing.assert_allclose(st.base.apply(plan.swing_foot.p0), st.feet_world[leg], atol=1e-12)


def test_decode_rejects_bad_actions(model):
    with pytest.raises(ValueError):
        decode_action(np.zeros(26), ActionBounds(), start_at(model), 0, model)
    with pytest.raises(ValueError):
        decode_action(np.full(ACTION_DIM, np.nan), ActionBounds(), start_at(model), 0, model)


def test_bounds_validation_and_scaling():
    with pytest.raises(ValueError):
        ActionBounds(base_mid=(0.1, -0.1))
    half = ActionBounds().scaled(0.5)
    assert half.base_end == pytest.approx((-0.01, 0.05))
    assert half.orientation == pytest.approx((-0.15, 0.15))


def test_decode_monotone(rng):
    lo, hi = ActionBounds().arrays(hind=True)
    for _ in range(200):
        a = rng.uniform(-1.2, 1.2, ACTION_DIM)
        i = rng.integers(ACTION_DIM)
        b = a.copy()
        b[i] += rng.uniform(0, 0.5)
        assert scale_action(b, lo, hi)[i] >= scale_action(a, lo, hi)[i]


def test_phase_order():
    s = PhaseSchedule(0)
    assert s.swing_leg == 0
    s1 = next_phase(s)
    assert s1.index == 1 and s1.swing_leg == 3  # front-left then rear-right
    assert next_phase(PhaseSchedule(3)).index == 0
    t = s
    legs = []
    for _ in range(4):
        legs.append(t.swing_leg)
        t = next_phase(t)
    assert t == s and legs == list(SWING_ORDER) == [0, 3, 1, 2]


def test_constant_curves_hold_the_pose(model):
    bounds = ActionBounds(base_end=(-0.04, 0.04))
    plan = decode_action(np.zeros(ACTION_DIM), bounds, start_at(model), 1, model)
    q = phase_targets(plan, model)
    np.testing.assert_allclose(q, np.tile(model.squat_angles.reshape(12), (180, 1)), atol=1e-9)


def test_tick_180_reaches_p3(model, rng):
    st = start_at(model, (1.0, 0.5), 0.4)
    plan = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), st, 0, model)
    pos, rots = commanded_base(plan, [1.0])
    np.testing.assert_allclose(pos[0], st.base.apply(plan.base_pos.p3), atol=1e-12)
    end = commanded_end(plan)
    np.testing.assert_allclose(end.translation, pos[0], atol=1e-12)
    np.testing.assert_allclose(end.matrix, rots[0], atol=1e-12)


def test_tick_targets_matches_batch(model, rng):
    plan = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), start_at(model), 3, model)
    q = phase_targets(plan, model)
    for i in (1, 45, 180):
        np.testing.assert_allclose(tick_targets(plan, i, model), q[i - 1], atol=1e-12)
    with pytest.raises(ValueError):
        tick_targets(plan, 0, model)


def test_raised_swing_foot_shortens_leg(model):
    bounds = ActionBounds(base_end=(-0.04, 0.04))
    a = np.zeros(ACTION_DIM)
    a[20] = a[23] = (0.1 / 0.75) / 0.15  # heights of p1 and p2: curve peaks 10 cm up at t = 0.5
    plan = decode_action(a, bounds, start_at(model), 0, model)
    mid = plan.swing_foot
    assert (0.125 * mid.p0 + 0.375 * mid.p1 + 0.375 * mid.p2 + 0.125 * mid.p3)[2] - mid.p0[2] == pytest.approx(0.1)
    q = phase_targets(plan, model).reshape(180, 4, 3)
    feet = fk_legs(model, q[89])
    d_mid = np.linalg.norm(feet[0] - model.hip_offsets[0])
    d_start = np.linalg.norm(model.default_feet[0] - model.hip_offsets[0])
    assert d_mid < d_start - 0.05
    assert q[89, 0, 2] > model.squat_angles[0, 2]  # knee flexes more


def test_stance_targets_constant(model, rng):
    st = start_at(model, (0.2, 0.1), -0.2)
    plan = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), st, 1, model)
    w = foot_targets_world(plan, np.linspace(0, 1, 181))
    for leg in (0, 2, 3):
        assert np.abs(w[:, leg] - st.feet_world[leg]).max() < 1e-12


@pytest.mark.parametrize("frame", ["phase_start", "instantaneous"])
def test_commanded_continuity_across_phases(model, rng, frame):
    st = start_at(model)
    sched = PhaseSchedule(0)
    for _ in range(6):
        plan = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), st, sched.swing_leg, model, frame)
        end_feet = foot_targets_world(plan, [1.0])[0]
        end_base = commanded_end(plan)
        # perfect tracking: the next phase starts where this one ended
        st = PhaseStart(end_base, end_feet)
        sched = next_phase(sched)
        nxt = decode_action(rng.uniform(-1, 1, ACTION_DIM), ActionBounds(), st, sched.swing_leg, model, frame)
        pos, rots = commanded_base(nxt, [0.0])
        np.testing.assert_array_equal(pos[0], end_base.translation)
        np.testing.assert_allclose(rots[0], end_base.matrix, atol=1e-15)
        np.testing.assert_allclose(foot_targets_world(nxt, [0.0])[0], end_feet, atol=1e-12)
