"""Action decoding into Bezier phase plans and per-tick joint targets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import BezierCubic, Transform, bezier_eval, euler_to_matrix, quat_multiply, quat_normalize, euler_to_quat
from .robot import RobotModel, ik_legs_clamped

ACTION_DIM = 27
TICKS_PER_PHASE = 180
PHASE_DURATION = 0.75
# swing order: front-left, rear-right, front-right, rear-left
SWING_ORDER = (0, 3, 1, 2)


@dataclass(frozen=True)
class ActionBounds:
    """Physical ranges of the 9 free control points (3 per curve)."""

    base_mid: tuple = (-0.06, 0.06)  # control points 2 and 3, per axis, metres
    base_end: tuple = (-0.04, 0.08)  # control point 4, per axis
    orientation: tuple = (-0.3, 0.3)  # radians, every point and Euler axis
    foot_height: tuple = (-0.15, 0.15)  # from the current foot height
    foot_lateral: tuple = (-0.15, 0.15)  # from the default squat position
    foot_frontal: tuple = (-0.15, 0.15)
    hind_shift: float = -0.02

    def __post_init__(self):
        for name in ("base_mid", "base_end", "orientation", "foot_height", "foot_lateral", "foot_frontal"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"bound {name} needs lo < hi")

    @classmethod
    def from_dict(cls, d):
        d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**d)

    def scaled(self, factor):
        """All ranges scaled about their midpoints (restricted/enlarged action range)."""
        def sc(r):
            m, h = (r[0] + r[1]) / 2, (r[1] - r[0]) / 2 * factor
            return (m - h, m + h)
        return ActionBounds(sc(self.base_mid), sc(self.base_end), sc(self.orientation), sc(self.foot_height),
                            sc(self.foot_lateral), sc(self.foot_frontal), self.hind_shift)

    def arrays(self, hind=False):
        """(lo, hi) of length 27 as offsets from each component's anchor."""
        lo = np.empty(ACTION_DIM)
        hi = np.empty(ACTION_DIM)
        for p in range(3):
            r = self.base_end if p == 2 else self.base_mid
            lo[3 * p:3 * p + 3], hi[3 * p:3 * p + 3] = r
            lo[9 + 3 * p:12 + 3 * p], hi[9 + 3 * p:12 + 3 * p] = self.orientation
            shift = self.hind_shift if hind else 0.0
            i = 18 + 3 * p
            lo[i], hi[i] = self.foot_frontal[0] + shift, self.foot_frontal[1] + shift
            lo[i + 1], hi[i + 1] = self.foot_lateral
            lo[i + 2], hi[i + 2] = self.foot_height
        return lo, hi


def scale_action(a, lo, hi):
    """Affine map of clamped [-1, 1] components onto [lo, hi]."""
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    return lo + (a + 1.0) * 0.5 * (hi - lo)


@dataclass
class PhaseSchedule:
    index: int = 0

    @property
    def swing_leg(self):
        return SWING_ORDER[self.index]


def next_phase(schedule: PhaseSchedule) -> PhaseSchedule:
    return PhaseSchedule((schedule.index + 1) % 4)


@dataclass
class PhaseStart:
    """What a phase plan is anchored to."""

    base: Transform  # commanded (or measured) base pose at phase start
    feet_world: np.ndarray  # (4, 3) measured foot positions at phase start


@dataclass
class PhasePlan:
    base_pos: BezierCubic  # offsets in the phase-start base frame
    base_ori: BezierCubic  # Euler offsets relative to the phase-start orientation
    swing_foot: BezierCubic  # base-frame foot positions
    swing_leg: int
    start: PhaseStart
    duration: float = PHASE_DURATION
    swing_frame: str = "phase_start"  # or "instantaneous"


def decode_action(a, bounds: ActionBounds, start: PhaseStart, swing_leg: int, model: RobotModel,
                  swing_frame="phase_start") -> PhasePlan:
    """Turn a 27-vector in [-1, 1] into the three Bezier curves of a phase."""
    a = np.asarray(a, dtype=float)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"action must have {ACTION_DIM} components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("action has non-finite components")
    lo, hi = bounds.arrays(hind=swing_leg >= 2)
    v = scale_action(a, lo, hi).reshape(9, 3)
    zero = np.zeros(3)
    base_pos = BezierCubic(zero, v[0], v[1], v[2])
    base_ori = BezierCubic(zero, v[3], v[4], v[5])
    foot_now = start.base.apply_inverse(start.feet_world[swing_leg])
    default = model.default_feet[swing_leg]
    anchor = np.array([default[0], default[1], foot_now[2]])
    swing = BezierCubic(foot_now, anchor + v[6], anchor + v[7], anchor + v[8])
    return PhasePlan(base_pos, base_ori, swing, swing_leg, start, swing_frame=swing_frame)


def commanded_base(plan: PhasePlan, t):
    """Commanded base poses at curve parameters ``t`` (array).

    Returns (positions (n, 3), rotation matrices (n, 3, 3))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    R0 = plan.start.base.matrix
    offs = bezier_eval(plan.base_pos, t)
    pos = plan.start.base.translation + offs @ R0.T
    eul = bezier_eval(plan.base_ori, t)
    rots = np.array([R0 @ euler_to_matrix(e) for e in eul])
    return pos, rots


def commanded_end(plan: PhasePlan) -> Transform:
    """Commanded base pose at the end of the phase."""
    q = quat_multiply(plan.start.base.rotation, euler_to_quat(plan.base_ori.p3))
    return Transform(quat_normalize(q), plan.start.base.translation + plan.start.base.matrix @ plan.base_pos.p3)


def foot_targets_world(plan: PhasePlan, t):
    """World targets (n, 4, 3): stance feet fixed, swing foot on its curve."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pos, rots = commanded_base(plan, t)
    n = t.shape[0]
    tgt = np.repeat(plan.start.feet_world[None].astype(float), n, axis=0)
    sw = bezier_eval(plan.swing_foot, t)
    if plan.swing_frame == "instantaneous":
        tgt[:, plan.swing_leg] = np.einsum("nij,nj->ni", rots, sw) + pos
    else:
        tgt[:, plan.swing_leg] = plan.start.base.apply(sw)
    return tgt


def phase_targets(plan: PhasePlan, model: RobotModel, n=TICKS_PER_PHASE):
    """Desired joint angles for ticks 1..n, shape (n, 12)."""
    t = np.arange(1, n + 1) / n
    pos, rots = commanded_base(plan, t)
    world = foot_targets_world(plan, t)
    local = np.einsum("nji,nkj->nki", rots, world - pos[:, None, :])
    return ik_legs_clamped(model, local).reshape(n, 12)


def tick_targets(plan: PhasePlan, i: int, model: RobotModel, n=TICKS_PER_PHASE):
    """Desired joint angles at tick ``i`` (1..n)."""
    if not 1 <= i <= n:
        raise ValueError(f"tick index must be in 1..{n}")
    t = np.array([i / n])
    pos, rots = commanded_base(plan, t)
    world = foot_targets_world(plan, t)
    local = (world[0] - pos[0]) @ rots[0]
    return ik_legs_clamped(model, local).reshape(12)
