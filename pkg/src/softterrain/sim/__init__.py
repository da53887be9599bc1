"""Time stepping of the quadruped on the tile grid.

The heavy lifting lives in :mod:`softterrain.sim._kernels`; this module packs
the robot model into flat arrays and exposes a small object API plus the
functional operations used by the environment and tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..geom import Transform, quat_to_matrix
from ..robot import RobotModel, RobotState, fk_legs
from ..terrain import TileGrid
from . import _kernels as K

TERMINATION_REASONS = {
    K.TERM_NONE: None,
    K.TERM_LOW_BASE: "low_base",
    K.TERM_PITCH: "pitch",
    K.TERM_LINK: "link_contact",
    K.TERM_DIVERGED: "diverged",
}


class SimulationDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.001
    control_dt: float = 0.75 / 180
    gravity: float = 9.81
    friction: float = 0.6
    contact_stiffness: float = 6.0e4
    contact_damping: float = 600.0
    # viscous coefficient used to hold feet inside the friction cone
    friction_damping: float = 3000.0
    kp: float = 300.0
    kd: float = 8.0
    torque_limit: float = 40.0
    min_base_height: float = 0.20
    max_pitch_deg: float = 15.0
    max_velocity: float = 100.0
    check_termination: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and f.name not in ("gravity",) and v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.physics_dt <= 0 or self.control_dt <= 0:
            raise ValueError("time steps must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown sim parameters: {sorted(unknown)}")
        return cls(**d)

    @property
    def substeps(self):
        return max(1, math.ceil(self.control_dt / self.physics_dt - 1e-9))

    @property
    def substep_dt(self):
        """Physics step actually used: control_dt split into whole substeps."""
        return self.control_dt / self.substeps


@dataclass
class ContactEvent:
    link: str
    tile: tuple | None  # None = rigid floor outside the grid
    normal_force: float
    penetration: float


@dataclass
class StepOutput:
    state: RobotState
    torques: np.ndarray  # mean |tau| per joint over the tick
    torque_norm: float  # mean ||tau||_2 over the tick's substeps
    contacts: list
    grid: TileGrid
    termination: str | None = None


def pd_torque(q_des, q, qd, kp=300.0, kd=8.0, limit=40.0):
    """Clamped PD joint torque."""
    tau = kp * (np.asarray(q_des, float) - np.asarray(q, float)) - kd * np.asarray(qd, float)
    out = np.clip(tau, -limit, limit)
    return float(out) if out.ndim == 0 else out


def _rod_inertia(m, length, radius):
    It = m * (3 * radius ** 2 + length ** 2) / 12.0
    return np.diag([It, It, 0.5 * m * radius ** 2])


def _spatial_inertia(m, com, Ic):
    C = K.skew(np.asarray(com, dtype=float))
    I6 = np.zeros((6, 6))
    I6[:3, :3] = Ic + m * C @ C.T
    I6[:3, 3:] = m * C
    I6[3:, :3] = m * C.T
    I6[3:, 3:] = m * np.eye(3)
    return I6


class PackedModel:
    """Flat-array view of a :class:`RobotModel` for the compiled kernels."""

    LINK_NAMES = ["base"] + [f"{leg}_{part}" for leg in ("FL", "FR", "RL", "RR")
                             for part in ("hip", "upper", "lower")]

    def __init__(self, model: RobotModel):
        self.model = model
        nb = K.NB
        self.parent = np.zeros(nb, dtype=np.int64)
        self.axis = np.zeros((nb, 3))
        self.jpos = np.zeros((nb, 3))
        self.I6 = np.zeros((nb, 6, 6))
        l1, l2 = model.l_upper, model.l_lower
        L, W, H = model.base_length, model.base_width, model.base_height
        mb = model.base_mass
        self.I6[0] = _spatial_inertia(mb, np.zeros(3), np.diag([
            mb * (W * W + H * H) / 12, mb * (L * L + H * H) / 12, mb * (L * L + W * W) / 12]))
        self.foot_body = np.zeros(4, dtype=np.int64)
        self.foot_pt = np.zeros((4, 3))
        for leg in range(4):
            a, u, lo = 1 + 3 * leg, 2 + 3 * leg, 3 + 3 * leg
            self.parent[a], self.axis[a], self.jpos[a] = 0, (1, 0, 0), model.hip_offsets[leg]
            self.parent[u], self.axis[u], self.jpos[u] = a, (0, -1, 0), (0, 0, 0)
            self.parent[lo], self.axis[lo], self.jpos[lo] = u, (0, -1, 0), (0, 0, -l1)
            self.I6[u] = _spatial_inertia(model.upper_mass, (0, 0, -l1 / 2), _rod_inertia(model.upper_mass, l1, 0.03))
            r = model.foot_radius
            self.I6[lo] = (_spatial_inertia(model.lower_mass, (0, 0, -l2 / 2), _rod_inertia(model.lower_mass, l2, 0.015))
                           + _spatial_inertia(model.foot_mass, (0, 0, -l2), np.eye(3) * 0.4 * model.foot_mass * r * r))
            self.foot_body[leg] = lo
            self.foot_pt[leg] = (0, 0, -l2)
        # collision probes for non-foot links (termination only)
        bodies, pts, radii = [], [], []
        for sx in (-L / 2, L / 2):
            for sy in (-W / 2, W / 2):
                for sz in (-H / 2, H / 2):
                    bodies.append(0)
                    pts.append((sx, sy, sz))
                    radii.append(0.0)
        shin = l2 - 0.08
        for leg in range(4):
            for f in (0.5, 1.0):
                bodies.append(2 + 3 * leg)
                pts.append((0, 0, -l1 * f))
                radii.append(0.03)
            for f in (0.5, 1.0):
                bodies.append(3 + 3 * leg)
                pts.append((0, 0, -shin * f))
                radii.append(0.015)
        self.cap_body = np.array(bodies, dtype=np.int64)
        self.cap_pt = np.array(pts, dtype=float)
        self.cap_r = np.array(radii, dtype=float)
        self.cap_link = [self.LINK_NAMES[b] for b in bodies]
        self.hips = np.ascontiguousarray(model.hip_offsets, dtype=float)

    def params(self, cfg: SimConfig, grid: TileGrid):
        P = np.zeros(K.N_PARAMS)
        P[K.P_DT] = cfg.substep_dt
        P[K.P_NSUB] = cfg.substeps
        P[K.P_G] = cfg.gravity
        P[K.P_MU] = cfg.friction
        P[K.P_KC] = cfg.contact_stiffness
        P[K.P_CC] = cfg.contact_damping
        P[K.P_CT] = cfg.friction_damping
        P[K.P_KP] = cfg.kp
        P[K.P_KD] = cfg.kd
        P[K.P_TAU] = min(cfg.torque_limit, self.model.torque_limit)
        P[K.P_FOOTR] = self.model.foot_radius
        P[K.P_MT] = grid.tile_mass
        P[K.P_X0] = grid.x0
        P[K.P_Y0] = grid.y0
        P[K.P_TS] = grid.tile_size
        P[K.P_HMIN] = cfg.min_base_height
        P[K.P_PITCH] = math.radians(cfg.max_pitch_deg)
        P[K.P_CHECK] = 1.0 if cfg.check_termination else 0.0
        P[K.P_VMAX] = cfg.max_velocity
        return P


_PACK_CACHE: dict = {}


def packed(model: RobotModel) -> PackedModel:
    key = id(model)
    pm = _PACK_CACHE.get(key)
    if pm is None or pm.model is not model:
        pm = PackedModel(model)
        _PACK_CACHE[key] = pm
    return pm


@dataclass
class TickRecord:
    """Per-tick trajectory arrays produced by :meth:`Simulator.run`."""

    pos: np.ndarray
    quat: np.ndarray
    u: np.ndarray
    q: np.ndarray
    feet: np.ndarray
    foot_force: np.ndarray
    heights: np.ndarray
    torque_norm: np.ndarray
    torque_abs: np.ndarray
    ground: np.ndarray  # terrain surface height under each foot
    n: int
    termination: str | None = None

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 18)), np.zeros((n, 12)),
                   np.zeros((n, 4, 3)), np.zeros((n, 4)), np.zeros((n, 4)), np.zeros(n), np.zeros((n, 12)), np.zeros((n, 4)), 0)


class Simulator:
    """Owns the robot's dynamic state and a tile grid."""

    def __init__(self, model: RobotModel, grid: TileGrid, config: SimConfig | None = None):
        self.model = model
        self.grid = grid
        self.config = config or SimConfig()
        self.pm = packed(model)
        self.P = self.pm.params(self.config, grid)
        self.pos = np.zeros(3)
        self.quat = np.array([1.0, 0.0, 0.0, 0.0])
        self.u = np.zeros(18)
        self.q = np.zeros(12)
        self.time = 0.0

    # -- state access -------------------------------------------------------
    def set_state(self, state: RobotState):
        R = state.base.matrix
        self.pos[:] = state.base.translation
        self.quat[:] = state.base.rotation
        self.u[:3] = R.T @ np.asarray(state.ang_vel, float)
        self.u[3:6] = R.T @ np.asarray(state.lin_vel, float)
        self.q[:] = state.q
        self.u[6:] = state.qd

    def place_squat(self, xy=(0.0, 0.0), yaw=0.0):
        """Squat pose with the foot spheres resting on the undeformed ground."""
        base = Transform.from_euler((0.0, 0.0, yaw), (xy[0], xy[1], self.model.squat_height))
        self.set_state(RobotState.from_pose(self.model, base, self.model.squat_angles.reshape(12)))

    def get_state(self) -> RobotState:
        R = quat_to_matrix(self.quat)
        base = Transform(self.quat / np.linalg.norm(self.quat), self.pos.copy())
        return RobotState(base, R @ self.u[3:6], R @ self.u[:3], self.q.copy(), self.u[6:].copy(),
                          self.feet_world())

    def feet_world(self):
        pm = self.pm
        return K.feet_world(self.pos, self.quat, self.q, pm.parent, pm.axis, pm.jpos, pm.foot_body, pm.foot_pt)

    # -- stepping -----------------------------------------------------------
    def run(self, qdes_ticks) -> TickRecord:
        """Run one control tick per row of ``qdes_ticks`` (n x 12)."""
        qdes = np.ascontiguousarray(np.atleast_2d(qdes_ticks), dtype=float)
        n = qdes.shape[0]
        rec = TickRecord.empty(n)
        tau = np.zeros((n, 13))
        pm, g = self.pm, self.grid
        try:
            done, code = K.run_ticks(
                self.pos, self.quat, self.u, self.q, qdes, self.P, pm.parent, pm.axis, pm.jpos, pm.I6,
                pm.foot_body, pm.foot_pt, pm.hips, pm.cap_body, pm.cap_pt, pm.cap_r,
                g.z, g.zd, g.k, g.c, g.rigid, g.touched, g.touched_list, g.n_touched,
                rec.pos, rec.quat, rec.u, rec.q, rec.feet, rec.foot_force, rec.heights, tau, rec.ground)
        except Exception:  # singular system or similar numerical failure
            done, code = 0, K.TERM_DIVERGED
        rec.torque_norm[:] = tau[:, 0]
        rec.torque_abs[:] = tau[:, 1:]
        rec.n = done
        rec.termination = TERMINATION_REASONS[code]
        self.time += done * self.config.control_dt
        return rec

    def step_tick(self, q_des) -> StepOutput:
        rec = self.run(np.asarray(q_des, float).reshape(1, 12))
        if rec.termination == "diverged":
            raise SimulationDiverged("simulation diverged")
        return StepOutput(self.get_state(), rec.torque_abs[0].copy(), float(rec.torque_norm[0]),
                          contact_resolve(self.model, self.get_state(), self.grid, self.config), self.grid,
                          rec.termination)

    def base_heights(self):
        return base_heights(self.model, self.get_state(), self.grid)


def step_control_tick(model: RobotModel, state: RobotState, grid: TileGrid, q_des,
                      config: SimConfig | None = None) -> StepOutput:
    """Advance one control tick from ``state``; ``grid`` is updated in place."""
    sim = Simulator(model, grid, config)
    sim.set_state(state)
    return sim.step_tick(q_des)


def base_heights(model: RobotModel, state: RobotState, grid: TileGrid) -> np.ndarray:
    """Height of each hip joint above the terrain directly below it."""
    hips = state.base.apply(model.hip_offsets)
    return np.array([h[2] - grid.height_at(h[0], h[1]) for h in hips])


def contact_resolve(model: RobotModel, state: RobotState, grid: TileGrid, config: SimConfig | None = None):
    """Explicit penalty forces for the current state.

    Feet produce ``max(0, k_c * depth + c_c * closing_speed)``; other links only
    report penetration (used for termination)."""
    cfg = config or SimConfig()
    pm = packed(model)
    events = []
    feet = state.feet
    R = state.base.matrix
    w_body = R.T @ state.ang_vel
    v_body = R.T @ state.lin_vel
    u = np.concatenate([w_body, v_body, state.qd])
    X, Rb, pb = K.kinematics(state.q, pm.parent, pm.axis, pm.jpos)
    J = K.body_jacobians(X, pm.parent, pm.axis)
    for f in range(4):
        p = feet[f]
        idx = grid.tile_of(p[0], p[1])
        top = 0.0 if idx is None else float(grid.z[idx])
        depth = top - (p[2] - model.foot_radius)
        if depth <= 0:
            continue
        Jp = K.point_jacobian_world(J, R, Rb, pm.foot_body[f], pm.foot_pt[f])
        vz = Jp[2] @ u
        w = 0.0 if idx is None or grid.rigid[idx] else float(grid.zd[idx])
        F = max(0.0, cfg.contact_stiffness * depth + cfg.contact_damping * (w - vz))
        events.append(ContactEvent(f"{('FL', 'FR', 'RL', 'RR')[f]}_foot", idx, F, depth))
    for b, pt, r, name in zip(pm.cap_body, pm.cap_pt, pm.cap_r, pm.cap_link):
        pw = state.base.translation + R @ (pb[b] + Rb[b] @ pt)
        idx = grid.tile_of(pw[0], pw[1])
        top = 0.0 if idx is None else float(grid.z[idx])
        depth = top - (pw[2] - r)
        if depth > 0:
            events.append(ContactEvent(name, idx, 0.0, depth))
    return events


def friction_bound(normal_force, mu=0.6):
    return mu * max(normal_force, 0.0)
