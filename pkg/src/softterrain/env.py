"""Locomotion environment: one step executes one 0.75 s gait phase."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .gait import (ACTION_DIM, TICKS_PER_PHASE, ActionBounds, PhaseSchedule, PhaseStart, commanded_end,
                   decode_action, next_phase, phase_targets)
from .geom import Transform, gravity_in_base, quat_to_euler
from .robot import RobotModel
from .sim import SimConfig, Simulator
from .terrain import DEPTH_SET, TileGrid, build_layout, constant_layout

TERMINATION_PENALTY = -10.0

# index ranges of the default 102-D observation
OBS_LAYOUT = {
    "base_heights": (0, 4),
    "gravity": (4, 7),
    "lin_vel": (7, 10),
    "ang_vel": (10, 13),
    "pitch": (13, 14),
    "feet_phase_history": (14, 62),
    "feet_tick_history": (62, 86),
    "feet_velocity": (86, 98),
    "goal_azimuth": (98, 99),
    "goal_position": (99, 101),
    "phase": (101, 102),
}
OBS_DIM = 102

SCENARIOS = ("t_v2", "t_v8", "t_c2", "t_c3", "t_c4", "t_c5", "rigid")


# --------------------------------------------------------------------------- rewards
def reward_goal_distance(prev_dist, cur_dist, gain_closer=10.0, gain_away=1.0):
    """Progress toward the goal, weighted 10x when approaching."""
    progress = prev_dist - cur_dist
    return (gain_closer if progress > 0 else gain_away) * progress


def reward_goal_orientation(azimuth_deg):
    return max(0.0, 0.02 * (10.0 - abs(azimuth_deg)))


def reward_min_height(height, threshold=0.25):
    return 0.1 if height > threshold else 0.0


def reward_torque(tau_ave, tau_thresh=140.0):
    return max(0.0, 0.004 * (tau_thresh - tau_ave))


def reward_roll(roll):
    return max(0.0, 2.0 * (0.1 - abs(roll)))


@dataclass
class RewardBreakdown:
    goal_distance: float = 0.0
    goal_orientation: float = 0.0
    min_height: float = 0.0
    torque: float = 0.0
    roll: float = 0.0
    penalty: float = 0.0

    @property
    def total(self):
        return self.goal_distance + self.goal_orientation + self.min_height + self.torque + self.roll + self.penalty

    def as_dict(self):
        d = asdict(self)
        d["total"] = self.total
        return d


# --------------------------------------------------------------------------- config
@dataclass(frozen=True)
class EpisodeConfig:
    scenario: str = "t_v2"
    goal_distance: float = 2.0
    goal_threshold: float = 0.30
    max_phases: int = 400
    seed: int | None = None
    start_jitter: float = 0.10
    settle_ticks: int = 48
    first_depth: float | None = 0.02
    reward_mode: str = "full"  # "full" or "stand" (min-height + roll only)
    anchor: str = "commanded"  # or "measured"
    swing_frame: str = "phase_start"  # or "instantaneous"
    # observation options; defaults give the 102-D layout
    phase_history: int = 4
    dense_history: bool = False
    tick_history: bool = True
    velocity_history: int = 1
    joint_state: bool = False

    def __post_init__(self):
        if self.max_phases <= 0:
            raise ValueError("max_phases must be positive")
        if not (self.scenario in SCENARIOS or self.scenario.startswith("t_c")):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.reward_mode not in ("full", "stand"):
            raise ValueError("reward_mode must be 'full' or 'stand'")
        if self.anchor not in ("commanded", "measured"):
            raise ValueError("anchor must be 'commanded' or 'measured'")
        if self.swing_frame not in ("phase_start", "instantaneous"):
            raise ValueError("swing_frame must be 'phase_start' or 'instantaneous'")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown episode parameters: {sorted(unknown)}")
        return cls(**d)

    @property
    def obs_dim(self):
        n = 4 + 3 + 6 + 1
        n += 12 * self.phase_history * (2 if self.dense_history else 1) - (12 if self.dense_history else 0)
        n += 24 if self.tick_history else 0
        n += 12 * self.velocity_history
        n += 1 + 2 + 1
        n += 24 if self.joint_state else 0
        return n


def scenario_layout(scenario, rng, start_x, total_length, first_depth=0.02):
    if scenario == "t_v2":
        return build_layout(rng, 2.0, DEPTH_SET, total_length, first_depth, start_x)
    if scenario == "t_v8":
        return build_layout(rng, 8.0, DEPTH_SET, total_length, first_depth, start_x)
    if scenario == "rigid":
        return constant_layout(None, start_x, total_length)
    if scenario.startswith("t_c"):
        return constant_layout(float(scenario[3:]) / 100.0, start_x, total_length)
    raise ValueError(f"unknown scenario {scenario!r}")


# --------------------------------------------------------------------------- history
class FootHistoryBuffer:
    """Base-frame foot positions at recent phase starts and control ticks."""

    def __init__(self, phase_depth=4, tick_depth=3, dense=False):
        self.dense = dense
        n = phase_depth * 2 - 1 if dense else phase_depth
        self.phase = deque(maxlen=n)
        self.ticks = deque(maxlen=max(tick_depth, 2))

    def seed(self, feet_base):
        feet_base = np.asarray(feet_base, dtype=float)
        for _ in range(self.phase.maxlen):
            self.phase.append(feet_base.copy())
        for _ in range(self.ticks.maxlen):
            self.ticks.append(feet_base.copy())

    def push_phase(self, feet_base, mid=None):
        if self.dense and mid is not None:
            self.phase.append(np.asarray(mid, dtype=float).copy())
        self.phase.append(np.asarray(feet_base, dtype=float).copy())

    def push_tick(self, feet_base):
        self.ticks.append(np.asarray(feet_base, dtype=float).copy())

    def velocity(self, dt, lag=0):
        t = list(self.ticks)
        return (t[-1 - lag] - t[-2 - lag]) / dt


def _state_features(sim: Simulator):
    st = sim.get_state()
    R = st.base.matrix
    return st, R


def build_observation(sim: Simulator, history: FootHistoryBuffer, goal_xy, phase_index: int,
                      config: EpisodeConfig = EpisodeConfig()):
    """Assemble the observation vector (102-D with default options)."""
    st = sim.get_state()
    R = st.base.matrix
    heights = sim.base_heights()
    rpy = quat_to_euler(st.base.rotation)
    parts = [heights, gravity_in_base(R), R.T @ st.lin_vel, R.T @ st.ang_vel, [rpy[1]]]
    parts += [p.ravel() for p in history.phase]
    if config.tick_history:
        t = list(history.ticks)
        parts += [t[-2].ravel(), t[-3].ravel()]
    dt = sim.config.control_dt
    for lag in range(config.velocity_history):
        lag = min(lag, len(history.ticks) - 2)
        parts.append(history.velocity(dt, lag).ravel())
    rho = goal_in_base(st.base, goal_xy)
    parts += [[math.atan2(rho[1], rho[0])], rho, [phase_index / 4.0]]
    if config.joint_state:
        parts += [st.q, st.qd]
    obs = np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])
    return obs


def goal_in_base(base: Transform, goal_xy):
    """Frontal and lateral goal coordinates in the base frame."""
    g = np.array([goal_xy[0], goal_xy[1], base.translation[2]])
    return base.apply_inverse(g)[:2]


def check_termination(sim: Simulator, config: SimConfig | None = None):
    """Termination reason for the simulator's current state, or None."""
    from .sim import _kernels as K, TERMINATION_REASONS
    pm = sim.pm
    heights = np.zeros(4)
    P = sim.P.copy()
    P[K.P_CHECK] = 1.0
    if config is not None:
        P[K.P_HMIN] = config.min_base_height
        P[K.P_PITCH] = math.radians(config.max_pitch_deg)
    code = K.check_state(sim.pos, sim.quat, sim.u, sim.q, P, pm.parent, pm.axis, pm.jpos, pm.hips,
                         pm.cap_body, pm.cap_pt, pm.cap_r, sim.grid.z, heights)
    return TERMINATION_REASONS[code]


# --------------------------------------------------------------------------- environment
class QuadrupedEnv:
    """Phase-level environment.  ``step`` returns (obs, RewardBreakdown, done, info)."""

    def __init__(self, config: EpisodeConfig = EpisodeConfig(), model: RobotModel | None = None,
                 sim_config: SimConfig | None = None, bounds: ActionBounds | None = None, record=False,
                 record_ticks=False):
        self.config = config
        self.model = model or RobotModel()
        self.sim_config = sim_config or SimConfig()
        self.bounds = bounds or ActionBounds()
        self.record = record
        self.record_ticks = record_ticks
        self.obs_dim = config.obs_dim
        self.act_dim = ACTION_DIM
        self.sim = None
        self._episode = -1
        self._rng = np.random.default_rng(config.seed)

    # ------------------------------------------------------------------ reset
    def reset(self, seed=None):
        cfg = self.config
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        rng = self._rng
        self._episode += 1
        grid = TileGrid.flat(30.0, 3.0, (0.0, 0.0))
        start_x = -1.0
        layout = scenario_layout(cfg.scenario, rng, start_x, grid.x1 - start_x,
                                 cfg.first_depth if cfg.scenario in ("t_v2", "t_v8") else None)
        grid.apply_layout(layout, self.model.total_mass, self.sim_config.gravity)
        self.layout = layout
        self.sim = Simulator(self.model, grid, self.sim_config)
        jit = rng.uniform(-cfg.start_jitter, cfg.start_jitter, size=2) if cfg.start_jitter > 0 else np.zeros(2)
        self.sim.place_squat(xy=jit)
        self.start_xy = jit.copy()
        self.command = self.sim.get_state().base
        if cfg.settle_ticks > 0:
            hold = np.tile(self.model.squat_angles.reshape(12), (cfg.settle_ticks, 1))
            self.sim.run(hold)
        st = self.sim.get_state()
        self.goal = np.array([jit[0] + cfg.goal_distance, jit[1]])
        self.schedule = PhaseSchedule(0)
        self.history = FootHistoryBuffer(cfg.phase_history, 3, cfg.dense_history)
        self.history.seed(st.feet_in_base())
        self.phase_count = 0
        self.done = False
        self.goals_reached = 0
        self._prev_dist = float(np.linalg.norm(goal_in_base(st.base, self.goal)))
        return self._observe()

    def _observe(self):
        self._obs = build_observation(self.sim, self.history, self.goal, self.schedule.index, self.config)
        return self._obs.copy()

    # ------------------------------------------------------------------ step
    def step(self, action):
        if self.sim is None:
            raise RuntimeError("call reset() before step()")
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.config
        a = np.clip(np.asarray(action, dtype=float).reshape(ACTION_DIM), -1.0, 1.0)
        st0 = self.sim.get_state()
        anchor = self.command if cfg.anchor == "commanded" else st0.base
        start = PhaseStart(anchor, st0.feet.copy())
        leg = self.schedule.swing_leg
        plan = decode_action(a, self.bounds, start, leg, self.model, cfg.swing_frame)
        qdes = phase_targets(plan, self.model)
        phase_index = self.schedule.index
        rec = self.sim.run(qdes)
        n = rec.n
        self.command = commanded_end(plan)
        st = self.sim.get_state()
        # foot histories from the recorded ticks
        self._push_ticks(rec)
        mid = None
        if cfg.dense_history and n > TICKS_PER_PHASE // 2:
            k = TICKS_PER_PHASE // 2 - 1
            mid = Transform(rec.quat[k], rec.pos[k]).apply_inverse(rec.feet[k])
        self.history.push_phase(st.feet_in_base(), mid)

        rho = goal_in_base(st.base, self.goal)
        cur_dist = float(np.linalg.norm(rho))
        azimuth = math.atan2(rho[1], rho[0])
        heights = self.sim.base_heights()
        rpy = quat_to_euler(st.base.rotation)
        tau_ave = float(np.mean(rec.torque_norm[:n])) if n else 0.0
        terminated = rec.termination
        rb = RewardBreakdown()
        if terminated is not None:
            rb.penalty = 0.0 if cfg.reward_mode == "stand" else TERMINATION_PENALTY
        elif cfg.reward_mode == "stand":
            rb.min_height = reward_min_height(float(np.mean(heights)))
            rb.roll = reward_roll(rpy[0])
        else:
            rb.goal_distance = reward_goal_distance(self._prev_dist, cur_dist)
            rb.goal_orientation = reward_goal_orientation(math.degrees(azimuth))
            rb.min_height = reward_min_height(float(np.mean(heights)))
            rb.torque = reward_torque(tau_ave)
            rb.roll = reward_roll(rpy[0])

        goal_reset = False
        if cur_dist < cfg.goal_threshold:
            # next goal 2 m ahead along the current base heading
            yaw = rpy[2]
            self.goal = st.base.translation[:2] + cfg.goal_distance * np.array([math.cos(yaw), math.sin(yaw)])
            self.goals_reached += 1
            goal_reset = True
            rho = goal_in_base(st.base, self.goal)
        self._prev_dist = float(np.linalg.norm(rho))

        self.phase_count += 1
        self.schedule = next_phase(self.schedule)
        truncated = terminated is None and self.phase_count >= cfg.max_phases
        self.done = terminated is not None or truncated
        info = {
            "phase": self.phase_count,
            "phase_index": phase_index,
            "swing_leg": leg,
            "reward": rb.as_dict(),
            "termination": terminated,
            "truncated": truncated,
            "goal_distance": self._prev_dist,
            "goal_reset": goal_reset,
            "distance": float(np.linalg.norm(st.base.translation[:2] - self.start_xy)),
            "ticks": n,
            "tau_ave": tau_ave,
        }
        if self.record:
            info["log"] = self._log_record(a, plan, rec, rb, phase_index, heights, rpy, terminated)
        if self.record_ticks:
            info["tick_dump"] = self._tick_dump(rec)
        obs = self._observe()
        return obs, rb, self.done, info

    def _push_ticks(self, rec):
        n = rec.n
        for k in range(max(0, n - 3), n):
            self.history.push_tick(Transform(rec.quat[k] / np.linalg.norm(rec.quat[k]), rec.pos[k])
                                   .apply_inverse(rec.feet[k]))

    # ------------------------------------------------------------------ logging
    def _tick_dump(self, rec):
        dt = self.sim_config.control_dt
        t0 = self.sim.time - rec.n * dt
        out = []
        for k in range(rec.n):
            out.append({
                "episode": self._episode,
                "time": round(t0 + (k + 1) * dt, 9),
                "base_pos": rec.pos[k].tolist(),
                "base_quat": rec.quat[k].tolist(),
                "q": rec.q[k].tolist(),
                "feet": rec.feet[k].tolist(),
                "tile_z": rec.ground[k].tolist(),
            })
        return out

    def _log_record(self, a, plan, rec, rb, phase_index, heights, rpy, terminated):
        n = rec.n
        leg = plan.swing_leg
        default_z = float(self.model.default_feet[leg][2])
        tick_h = rec.heights[:n].mean(axis=1)
        force = rec.foot_force[:n, leg]
        contact_tick = None
        airborne = False
        for k in range(n):
            if force[k] <= 1.0:
                airborne = True
            elif airborne:
                contact_tick = k
                break
        contact_height = None
        if contact_tick is not None:
            T = Transform(rec.quat[contact_tick] / np.linalg.norm(rec.quat[contact_tick]), rec.pos[contact_tick])
            contact_height = float(T.apply_inverse(rec.feet[contact_tick, leg])[2] - default_z)
        st = self.sim.get_state()
        grid = self.sim.grid
        feet_depth = []
        for f in st.feet:
            idx = grid.tile_of(f[0], f[1])
            feet_depth.append(None if idx is None or grid.rigid[idx] else float(grid.depth[idx]))
        end_world = plan.start.base.apply(plan.swing_foot.p3)
        d_land = self.layout.depth_at(float(end_world[0]))
        return {
            "episode": self._episode,
            "scenario": self.config.scenario,
            "phase": self.phase_count,
            "phase_index": phase_index,
            "swing_leg": leg,
            "observation": [float(v) for v in self._obs],
            "action": a.tolist(),
            "reward": rb.as_dict(),
            "termination": terminated,
            "base_pos": st.base.translation.tolist(),
            "base_rpy": [float(v) for v in rpy],
            "base_heights": [float(h) for h in heights],
            "tick_heights": [float(h) for h in tick_h],
            "landing_target": float(plan.swing_foot.p3[2] - default_z),
            "landing_contact": contact_height,
            "landing_tick": contact_tick,
            "landing_depth": d_land,
            "base_depth": self.layout.depth_at(float(st.base.translation[0])),
            "feet_depth": feet_depth,
            "stripe_under_feet": [self.layout.stripe_index(float(f[0])) for f in st.feet],
        }
