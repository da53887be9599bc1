"""Quadruped morphology, forward kinematics and analytic leg IK.

Each leg is an abduction joint about the base x axis followed by two pitch
joints (hip, knee) about the lateral axis.  Pitch joints are signed so that a
positive angle swings the foot forward; with the knee restricted to positive
angles the knee points backward.  Leg order everywhere is FL, FR, RL, RR.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from .geom import Transform

LEG_NAMES = ("FL", "FR", "RL", "RR")
FOOT_RADIUS = 0.02


class UnreachableError(ValueError):
    """An IK target lies outside the reachable workspace of a leg."""

    def __init__(self, msg, leg=None):
        super().__init__(msg if leg is None else f"leg {LEG_NAMES[leg]}: {msg}")
        self.leg = leg


def _default_hips():
    return np.array([[0.275, 0.10, 0.0], [0.275, -0.10, 0.0],
                     [-0.275, 0.10, 0.0], [-0.275, -0.10, 0.0]])


def _default_limits():
    return np.array([[-0.8, 0.8], [-1.5, 1.5], [0.1, 2.6]])


@dataclass(frozen=True)
class RobotModel:
    base_length: float = 0.55
    base_width: float = 0.20
    base_height: float = 0.10
    base_mass: float = 18.0
    upper_mass: float = 1.0
    lower_mass: float = 0.5
    foot_mass: float = 0.25
    l_upper: float = 0.25
    l_lower: float = 0.25
    hip_offsets: np.ndarray = field(default_factory=_default_hips)
    # per joint type (abduction, hip pitch, knee), shared by all legs
    joint_limits: np.ndarray = field(default_factory=_default_limits)
    torque_limit: float = 40.0
    # hip height above the ground in the initial squat, feet under the hips
    squat_height: float = 0.33
    foot_radius: float = FOOT_RADIUS

    def __post_init__(self):
        for name in ("base_mass", "upper_mass", "lower_mass", "foot_mass", "l_upper", "l_lower"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        lim = np.asarray(self.joint_limits, dtype=float)
        if lim.shape != (3, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint_limits must be 3 [lo, hi] pairs with lo < hi")
        hips = np.asarray(self.hip_offsets, dtype=float)
        if hips.shape != (4, 3):
            raise ValueError("hip_offsets must be 4x3")
        object.__setattr__(self, "joint_limits", lim)
        object.__setattr__(self, "hip_offsets", hips)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown robot parameters: {sorted(unknown)}")
        return cls(**{k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in d.items()})

    def with_overrides(self, **kw):
        return replace(self, **kw)

    @property
    def total_mass(self):
        return self.base_mass + 4 * (self.upper_mass + self.lower_mass + self.foot_mass)

    @property
    def leg_length(self):
        return self.l_upper + self.l_lower

    @property
    def limits12(self):
        return np.tile(self.joint_limits, (4, 1))

    @property
    def reach_min(self):
        """Shortest hip-foot distance allowed by the knee limit."""
        k = self.joint_limits[2, 1]
        return float(np.sqrt(self.l_upper ** 2 + self.l_lower ** 2 + 2 * self.l_upper * self.l_lower * np.cos(k)))

    @property
    def reach_max(self):
        k = max(self.joint_limits[2, 0], 0.0)
        return float(np.sqrt(self.l_upper ** 2 + self.l_lower ** 2 + 2 * self.l_upper * self.l_lower * np.cos(k)))

    @cached_property
    def squat_angles(self):
        """(4, 3) joint angles with each foot directly below its hip."""
        d = self.squat_height - self.foot_radius
        q = np.empty((4, 3))
        for leg in range(4):
            q[leg] = ik_leg(self, leg, self.hip_offsets[leg] + np.array([0.0, 0.0, -d]))
        return q

    @cached_property
    def default_feet(self):
        """Base-frame foot positions in the squat pose."""
        return fk_legs(self, self.squat_angles)


@dataclass
class RobotState:
    """Kinematic snapshot.  Velocities are in the world frame."""

    base: Transform
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    q: np.ndarray  # (12,)
    qd: np.ndarray  # (12,)
    feet: np.ndarray  # (4, 3) world

    @classmethod
    def from_pose(cls, model: RobotModel, base: Transform, q, lin_vel=None, ang_vel=None, qd=None):
        q = np.asarray(q, dtype=float).reshape(12)
        feet = base.apply(fk_legs(model, q.reshape(4, 3)))
        z = np.zeros(3)
        return cls(base, z.copy() if lin_vel is None else np.asarray(lin_vel, float),
                   z.copy() if ang_vel is None else np.asarray(ang_vel, float),
                   q, np.zeros(12) if qd is None else np.asarray(qd, float), feet)

    def feet_in_base(self):
        return self.base.apply_inverse(self.feet)


def _leg_chain(model, q):
    """Vectorised FK helper. q: (..., 3). Returns (knee, foot) relative to the hip."""
    a, h, k = q[..., 0], q[..., 1], q[..., 2]
    l1, l2 = model.l_upper, model.l_lower
    # sagittal-plane coordinates before abduction (x forward, z up)
    kx = l1 * np.sin(h)
    kz = -l1 * np.cos(h)
    fx = kx + l2 * np.sin(h + k)
    fz = kz - l2 * np.cos(h + k)
    ca, sa = np.cos(a), np.sin(a)

    def rot(x, z):
        # abduction about x applied to (x, 0, z)
        return np.stack([x, -sa * z, ca * z], axis=-1)

    return rot(kx, kz), rot(fx, fz)


def fk_leg(model: RobotModel, leg: int, q) -> np.ndarray:
    """Foot position of one leg in the base frame."""
    q = np.asarray(q, dtype=float)
    return model.hip_offsets[leg] + _leg_chain(model, q)[1]


def fk_legs(model: RobotModel, q) -> np.ndarray:
    """Foot positions for joint angles shaped (..., 4, 3)."""
    q = np.asarray(q, dtype=float)
    return model.hip_offsets + _leg_chain(model, q)[1]


def knee_positions(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return model.hip_offsets + _leg_chain(model, q)[0]


def _ik_raw(model, rel):
    """Closed-form IK for hip-relative targets (..., 3); no checks."""
    px, py, pz = rel[..., 0], rel[..., 1], rel[..., 2]
    a = np.arctan2(py, -pz)
    zp = -np.sqrt(py * py + pz * pz)
    l1, l2 = model.l_upper, model.l_lower
    d2 = px * px + zp * zp
    ck = (d2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    k = np.arccos(np.clip(ck, -1.0, 1.0))
    beta = np.arctan2(px, -zp)
    h = beta - np.arctan2(l2 * np.sin(k), l1 + l2 * np.cos(k))
    return np.stack([a, h, k], axis=-1), np.sqrt(d2)


def ik_leg(model: RobotModel, leg: int, target) -> np.ndarray:
    """Joint angles (abduction, hip, knee) placing the foot at ``target``.

    Raises :class:`UnreachableError` when the target is outside the annulus
    allowed by the link lengths or when the solution violates a joint limit.
    """
    rel = np.asarray(target, dtype=float) - model.hip_offsets[leg]
    dist = float(np.linalg.norm(rel))
    lo = abs(model.l_upper - model.l_lower)
    hi = model.leg_length
    tol = 1e-12
    if dist > hi + tol or dist < lo - tol:
        raise UnreachableError(f"target at {dist:.4f} m from hip, reachable [{lo:.4f}, {hi:.4f}]", leg)
    if -rel[2] <= 0 and abs(rel[1]) < 1e-12:
        raise UnreachableError("target at or above the hip plane", leg)
    q, _ = _ik_raw(model, rel)
    lim = model.joint_limits
    if np.any(q < lim[:, 0] - 1e-12) or np.any(q > lim[:, 1] + 1e-12):
        raise UnreachableError(f"solution {np.round(q, 4)} violates joint limits", leg)
    return q


def clamp_reach(model: RobotModel, rel, margin=0.995):
    """Project hip-relative targets (..., 3) into the reachable annulus.

    Points are moved along the hip-to-target ray to at most ``margin`` of full
    extension and at least slightly beyond the knee-limited minimum.
    """
    rel = np.asarray(rel, dtype=float)
    d = np.linalg.norm(rel, axis=-1, keepdims=True)
    dmax = min(margin * model.leg_length, model.reach_max)
    dmin = model.reach_min * 1.005
    scale = np.clip(d, dmin, dmax) / np.maximum(d, 1e-12)
    return rel * scale


def ik_legs_clamped(model: RobotModel, targets) -> np.ndarray:
    """IK for base-frame targets (..., 4, 3) that never fails.

    Targets are projected into the reachable annulus and the resulting angles
    clipped to the joint limits.
    """
    rel = clamp_reach(model, np.asarray(targets, dtype=float) - model.hip_offsets)
    # keep the target below the hip so the abduction solution stays in range
    rel[..., 2] = np.minimum(rel[..., 2], -1e-3)
    q, _ = _ik_raw(model, rel)
    lim = model.joint_limits
    return np.clip(q, lim[:, 0], lim[:, 1])


def ik_pose(model: RobotModel, base: Transform, feet_world) -> np.ndarray:
    """Strict whole-body IK: 12 joint angles for a commanded base pose."""
    local = base.apply_inverse(np.asarray(feet_world, dtype=float))
    q = np.empty((4, 3))
    for leg in range(4):
        q[leg] = ik_leg(model, leg, local[leg])
    return q.reshape(12)
