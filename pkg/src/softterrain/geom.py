"""Rotation helpers and cubic Bezier curves.

Conventions used throughout the package:

* world frame is z-up, x along the robot's initial heading;
* Euler angles are (roll, pitch, yaw) applied intrinsically about x, then y,
  then z, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``;
* quaternions are stored scalar-first ``(w, x, y, z)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY_DIR = np.array([0.0, 0.0, -1.0])


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(rpy):
    roll, pitch, yaw = rpy
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler(R):
    """Inverse of :func:`euler_to_matrix` (pitch in [-pi/2, pi/2])."""
    R = np.asarray(R)
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([wrap_angle(roll), pitch, wrap_angle(yaw)])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def euler_to_quat(rpy):
    roll, pitch, yaw = rpy
    qx = np.array([np.cos(roll / 2), np.sin(roll / 2), 0.0, 0.0])
    qy = np.array([np.cos(pitch / 2), 0.0, np.sin(pitch / 2), 0.0])
    qz = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
    return quat_multiply(qz, quat_multiply(qy, qx))


def quat_to_euler(q):
    return matrix_to_euler(quat_to_matrix(q))


@dataclass(frozen=True)
class Transform:
    """Rigid transform mapping local coordinates to the parent (world) frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("Transform rotation must be a unit quaternion")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def from_euler(cls, rpy, translation=(0.0, 0.0, 0.0)):
        return cls(euler_to_quat(rpy), np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, R, translation=(0.0, 0.0, 0.0)):
        return cls(matrix_to_quat(R), np.asarray(translation, dtype=float))

    @property
    def matrix(self):
        return quat_to_matrix(self.rotation)

    @property
    def euler(self):
        return quat_to_euler(self.rotation)

    def apply(self, p):
        """Local -> parent. Accepts (..., 3) arrays."""
        return np.asarray(p) @ self.matrix.T + self.translation

    def apply_inverse(self, p):
        """Parent -> local."""
        return (np.asarray(p) - self.translation) @ self.matrix

    def compose(self, other: "Transform") -> "Transform":
        """``self * other``: first ``other`` then ``self``."""
        R = self.matrix
        return Transform(quat_normalize(quat_multiply(self.rotation, other.rotation)),
                         R @ other.translation + self.translation)

    def inverse(self) -> "Transform":
        qi = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return Transform(qi, -(quat_to_matrix(qi) @ self.translation))


def gravity_in_base(orientation) -> np.ndarray:
    """Unit gravity direction expressed in the base frame.

    ``orientation`` may be a :class:`Transform`, a quaternion or a rotation
    matrix.
    """
    if isinstance(orientation, Transform):
        R = orientation.matrix
    else:
        o = np.asarray(orientation, dtype=float)
        R = quat_to_matrix(quat_normalize(o)) if o.shape == (4,) else o
    g = R.T @ GRAVITY_DIR
    return g / np.linalg.norm(g)


@dataclass(frozen=True)
class BezierCubic:
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"control point {name} must be a finite 3-vector")
            object.__setattr__(self, name, v)

    @property
    def points(self):
        return np.stack([self.p0, self.p1, self.p2, self.p3])

    @classmethod
    def constant(cls, p):
        return cls(p, p, p, p)


def _bernstein(t):
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([s ** 3, 3.0 * s * s * t, 3.0 * s * t * t, t ** 3], axis=-1)


def bezier_eval(c: BezierCubic, t):
    """Evaluate the curve at ``t`` (scalar or array) in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or not np.all(np.isfinite(t_arr)):
        raise ValueError(f"Bezier parameter out of [0, 1]: {t}")
    return _bernstein(t_arr) @ c.points


def de_casteljau(c: BezierCubic, t: float) -> np.ndarray:
    pts = [np.array(p) for p in c.points]
    while len(pts) > 1:
        pts = [(1.0 - t) * a + t * b for a, b in zip(pts[:-1], pts[1:])]
    return pts[0]


def bezier_sample(c: BezierCubic, n: int) -> np.ndarray:
    """``n`` samples at t = 1/n, ..., 1; the starting point is excluded."""
    if n < 2:
        raise ValueError("need at least two samples")
    t = np.arange(1, n + 1) / n
    t[-1] = 1.0
    return bezier_eval(c, t)
