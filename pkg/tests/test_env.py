import math

import numpy as np
import pytest

from softterrain.env import (OBS_DIM, OBS_LAYOUT, TERMINATION_PENALTY, EpisodeConfig, FootHistoryBuffer,
                             QuadrupedEnv, RewardBreakdown, check_termination, reward_goal_distance,
                             reward_goal_orientation, reward_min_height, reward_roll, reward_torque, scenario_layout)
from softterrain.geom import Transform
from softterrain.sim import Simulator
from softterrain.terrain import TileGrid


def make_env(**kw):
    kw.setdefault("scenario", "rigid")
    kw.setdefault("seed", 0)
    return QuadrupedEnv(EpisodeConfig(**kw))


# -- rewards ---------------------------------------------------------------

def test_reward_examples():
    assert reward_goal_distance(2.0, 1.9) == pytest.approx(1.0)
    assert reward_goal_distance(1.9, 2.0) == pytest.approx(-0.1)
    assert reward_goal_distance(1.5, 1.5) == 0.0
    assert reward_goal_orientation(0.0) == pytest.approx(0.2)
    assert reward_goal_orientation(10.0) == reward_goal_orientation(-10.0) == 0.0
    assert reward_goal_orientation(-5.0) == pytest.approx(0.1)
    assert reward_min_height(0.33) == 0.1
    assert reward_min_height(0.25) == 0.0 and reward_min_height(0.20) == 0.0
    assert reward_torque(140.0) == 0.0
    assert reward_torque(0.0) == pytest.approx(0.56)
    assert reward_torque(200.0) == 0.0
    assert reward_roll(0.0) == pytest.approx(0.2)
    assert reward_roll(0.1) == reward_roll(-0.1) == 0.0
    assert reward_roll(0.05) == pytest.approx(0.1)


@pytest.mark.parametrize("f,x", [
    (lambda x: reward_goal_distance(1.0, 1.0 - x), 0.0),
    (reward_goal_orientation, 10.0),
    (reward_goal_orientation, -10.0),
    (reward_torque, 140.0),
    (reward_roll, 0.1),
    (reward_roll, -0.1),
])
def test_reward_continuity(f, x):
    for eps in (1e-6, 1e-9):
        assert abs(f(x + eps) - f(x - eps)) < 20 * eps


def test_reward_bounds(rng):
    for v in rng.normal(scale=50, size=500):
        assert 0 <= reward_goal_orientation(v) <= 0.2
        assert 0 <= reward_torque(abs(v) * 3) <= 0.56
        assert 0 <= reward_roll(v / 100) <= 0.2
        assert reward_min_height(v / 100) in (0.0, 0.1)


def test_breakdown_total():
    rb = RewardBreakdown(1.0, 0.2, 0.1, 0.3, 0.05)
    assert rb.total == pytest.approx(1.65)
    d = rb.as_dict()
    assert d["total"] == pytest.approx(1.65) and set(d) >= {"goal_distance", "roll", "penalty"}


# -- observation -----------------------------------------------------------

def test_golden_layout():
    assert OBS_DIM == 102
    spans = sorted(OBS_LAYOUT.values())
    assert spans[0][0] == 0 and spans[-1][1] == 102
    for (a, b), (c, d) in zip(spans[:-1], spans[1:]):
        assert b == c
    expect = {"base_heights": 4, "gravity": 3, "lin_vel": 3, "ang_vel": 3, "pitch": 1, "feet_phase_history": 48,
              "feet_tick_history": 24, "feet_velocity": 12, "goal_azimuth": 1, "goal_position": 2, "phase": 1}
    assert {k: b - a for k, (a, b) in OBS_LAYOUT.items()} == expect


def sl(obs, name):
    a, b = OBS_LAYOUT[name]
    return obs[a:b]


def test_initial_observation():
    env = make_env(start_jitter=0.0)
    obs = env.reset()
    assert obs.shape == (OBS_DIM,) and np.all(np.isfinite(obs))
    assert sl(obs, "phase")[0] == 0.0
    # settling leaves the base within half a degree of level
    np.testing.assert_allclose(sl(obs, "gravity"), [0, 0, -1], atol=0.01)
    assert abs(sl(obs, "pitch")[0]) < 0.01
    np.testing.assert_allclose(sl(obs, "goal_position"), [2.0, 0.0], atol=0.02)  # settling drifts ~1 cm
    assert abs(sl(obs, "goal_azimuth")[0]) < 0.01
    np.testing.assert_allclose(sl(obs, "base_heights"), 0.33, atol=0.02)  # PD sag under load
    hist = sl(obs, "feet_phase_history").reshape(4, 4, 3)
    for k in range(1, 4):
        np.testing.assert_array_equal(hist[k], hist[0])


def test_reset_determinism():
    a = make_env(scenario="t_v2", seed=7).reset()
    b = make_env(scenario="t_v2", seed=7).reset()
    c = make_env(scenario="t_v2", seed=8).reset()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_observation_options():
    cfg = EpisodeConfig(scenario="rigid", seed=0, velocity_history=3, joint_state=True, dense_history=True)
    env = QuadrupedEnv(cfg)
    assert env.reset().shape == (cfg.obs_dim,)
    assert cfg.obs_dim == 102 + 24 + 24 + 36


# -- stepping --------------------------------------------------------------

def test_step_info_contract():
    env = make_env()
    env.reset()
    obs, rb, done, info = env.step(np.zeros(27))
    assert info["phase"] == 1 and info["phase_index"] == 0 and info["swing_leg"] == 0
    assert set(info["reward"]) >= {"goal_distance", "goal_orientation", "min_height", "torque", "roll", "total"}
    assert info["reward"]["total"] == pytest.approx(rb.total)
    assert sl(obs, "phase")[0] == 0.25
    assert not done


def test_episode_determinism(rng):
    acts = rng.normal(scale=0.1, size=(4, 27))
    runs = []
    for _ in range(2):
        env = make_env(scenario="t_v2", seed=3)
        env.reset()
        out = []
        for a in acts:
            obs, rb, done, _ = env.step(a)
            out.append((rb.total, obs.tobytes()))
            if done:
                break
        runs.append(out)
    assert len(runs[0]) >= 2 and runs[0] == runs[1]


def test_history_matches_recorded_feet(rng):
    env = make_env()
    env.reset()
    seen = [env.sim.get_state().feet_in_base()] * 3
    for _ in range(3):
        obs, _, done, _ = env.step(rng.normal(scale=0.1, size=27))
        seen.append(env.sim.get_state().feet_in_base())
        hist = sl(obs, "feet_phase_history").reshape(4, 4, 3)
        np.testing.assert_allclose(hist, np.array(seen[-4:]), atol=1e-12)
        if done:
            break


def test_termination_penalty_replaces_shaping():
    env = make_env(max_phases=40)
    env.reset()
    for _ in range(40):
        _, rb, done, info = env.step(np.zeros(27))  # keeps rising 2 cm a phase until the legs give out
        if done:
            break
    assert info["termination"] is not None and not info["truncated"]
    assert rb.total == TERMINATION_PENALTY
    with pytest.raises(RuntimeError):
        env.step(np.zeros(27))


def test_stand_mode_has_no_penalty():
    env = make_env(reward_mode="stand", max_phases=40)
    env.reset()
    _, rb, _, _ = env.step(np.zeros(27))
    assert rb.goal_distance == 0.0 and rb.torque == 0.0
    assert rb.total == pytest.approx(rb.min_height + rb.roll)


def test_truncation():
    env = make_env(max_phases=1)
    env.reset()
    _, _, done, info = env.step(np.zeros(27))
    assert done and info["truncated"] and info["termination"] is None


def test_step_before_reset():
    with pytest.raises(RuntimeError):
        make_env().step(np.zeros(27))


def test_goal_reissued_when_reached():
    env = make_env(start_jitter=0.0)
    env.reset()
    env.goal = env.sim.get_state().base.translation[:2].copy()
    env._prev_dist = 0.0
    _, _, _, info = env.step(np.zeros(27))
    assert info["goal_reset"]
    assert info["goal_distance"] == pytest.approx(2.0, abs=0.01)
    assert env.goals_reached == 1


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(max_phases=0)
    with pytest.raises(ValueError):
        EpisodeConfig(scenario="moon")
    with pytest.raises(KeyError):
        EpisodeConfig.from_dict({"bogus": 1})


def test_constant_scenario_layout():
    lay = scenario_layout("t_c5", np.random.default_rng(0), -1.0, 31.0)
    assert set(lay.depths) == {0.05}
    lay = scenario_layout("t_v8", np.random.default_rng(0), -1.0, 31.0, 0.02)
    assert lay.depths[0] == 0.02 and lay.stripe_length == 8.0


# -- termination checks -----------------------------------------------------

def posed_sim(model, z=0.33, pitch_deg=0.0):
    sim = Simulator(model, TileGrid.flat(4.0, 3.0))
    sim.place_squat()
    sim.pos[2] = z
    q = Transform.from_euler((0.0, math.radians(pitch_deg), 0.0), (0, 0, 0)).rotation
    sim.quat[:] = q
    return sim


def test_check_termination(model):
    assert check_termination(posed_sim(model)) is None
    assert check_termination(posed_sim(model, z=0.19)) == "low_base"
    assert check_termination(posed_sim(model, pitch_deg=16.0)) == "pitch"
    assert check_termination(posed_sim(model, pitch_deg=-16.0)) == "pitch"
    sim = posed_sim(model, z=0.30)
    sim.q[0:3] = (0.0, 0.0, 0.1)  # one leg straightened: the shank pokes through the floor
    assert check_termination(sim) == "link_contact"


def test_foot_history_buffer():
    h = FootHistoryBuffer(4, 3)
    h.seed(np.zeros((4, 3)))
    assert len(h.phase) == 4 and len(h.ticks) == 3
    h.push_tick(np.ones((4, 3)) * 0.01)
    np.testing.assert_allclose(h.velocity(0.01), 1.0)
    for k in range(5):
        h.push_phase(np.full((4, 3), k))
    assert [p[0, 0] for p in h.phase] == [1, 2, 3, 4]
