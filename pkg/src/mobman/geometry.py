"""Spatial value types and frame algebra.

Conventions: right-handed frames, z up, meters and radians, quaternions
stored as (w, x, y, z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def _normalize_quat(q) -> tuple[float, float, float, float]:
    w, x, y, z = (float(c) for c in q)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    # canonical hemisphere keeps equal rotations comparable
    if w < 0.0:
        n = -n
    return (w / n, x / n, y / n, z / n)


def quat_multiply(a, b) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m) -> tuple[float, float, float, float]:
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    return _normalize_quat(q)


def quat_from_axis_angle(axis, angle: float) -> tuple[float, float, float, float]:
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    s = math.sin(angle / 2.0)
    return _normalize_quat((math.cos(angle / 2.0), ax[0] * s, ax[1] * s, ax[2] * s))


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> tuple[float, float, float, float]:
    """URDF fixed-axis roll/pitch/yaw, i.e. R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return _normalize_quat(
        (
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    )


def quat_to_rpy(q) -> tuple[float, float, float]:
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    sp = max(-1.0, min(1.0, 2 * (w * y - z * x)))
    pitch = math.asin(sp)
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def rotation_angle(a, b) -> float:
    """Angle of the relative rotation between two unit quaternions."""
    d = abs(sum(x * y for x, y in zip(a, b)))
    return 2.0 * math.acos(min(1.0, d))


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def to_pose3d(self, z: float = 0.0) -> "Pose3D":
        return Pose3D((self.x, self.y, z), quat_from_axis_angle((0, 0, 1), self.theta))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @classmethod
    def from_dict(cls, d) -> "Pose2D":
        if isinstance(d, (list, tuple)):
            return cls(*d)
        return cls(d["x"], d["y"], d.get("theta", 0.0))


@dataclass(frozen=True)
class Pose3D:
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3:
            raise ValueError("translation must have 3 components")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", _normalize_quat(self.rotation))

    @classmethod
    def identity(cls) -> "Pose3D":
        return cls()

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose3D":
        return cls(tuple(xyz), quat_from_rpy(*rpy))

    @classmethod
    def from_matrix(cls, m) -> "Pose3D":
        m = np.asarray(m, dtype=float)
        return cls(tuple(m[:3, 3]), matrix_to_quat(m[:3, :3]))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    @property
    def position(self) -> np.ndarray:
        return np.array(self.translation)

    def rpy(self) -> tuple[float, float, float]:
        return quat_to_rpy(self.rotation)

    def transform_point(self, p) -> np.ndarray:
        return quat_to_matrix(self.rotation) @ np.asarray(p, dtype=float) + self.position

    def __matmul__(self, other: "Pose3D") -> "Pose3D":
        return compose(self, other)


def compose(a: Pose3D, b: Pose3D) -> Pose3D:
    """Return a∘b: the pose b expressed in a's parent frame."""
    rot = quat_to_matrix(a.rotation)
    t = rot @ np.asarray(b.translation) + np.asarray(a.translation)
    return Pose3D(tuple(t), quat_multiply(a.rotation, b.rotation))


def invert(p: Pose3D) -> Pose3D:
    w, x, y, z = p.rotation
    conj = (w, -x, -y, -z)
    t = -(quat_to_matrix(conj) @ np.asarray(p.translation))
    return Pose3D(tuple(t), conj)


def poses_close(a: Pose3D, b: Pose3D, tol: float = 1e-9) -> bool:
    dt = max(abs(x - y) for x, y in zip(a.translation, b.translation))
    return dt <= tol and rotation_angle(a.rotation, b.rotation) <= max(tol, 1e-7)


@dataclass(frozen=True)
class Twist2D:
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "w", float(self.w))


@dataclass(frozen=True)
class JointState:
    names: tuple[str, ...] = ()
    positions: tuple[float, ...] = ()
    velocities: tuple[float, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        names = tuple(self.names)
        pos = tuple(float(p) for p in self.positions)
        vel = tuple(0.0 for _ in pos) if self.velocities is None else tuple(float(v) for v in self.velocities)
        if not (len(names) == len(pos) == len(vel)):
            raise ValueError("names, positions and velocities must have equal length")
        if len(set(names)) != len(names):
            raise ValueError("joint names must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "JointState":
        return cls(tuple(mapping), tuple(mapping.values()))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.positions))

    def as_array(self) -> np.ndarray:
        return np.array(self.positions, dtype=float)

    def with_positions(self, positions: Sequence[float]) -> "JointState":
        return JointState(self.names, tuple(positions))

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class DiffDriveParams:
    wheel_radius: float
    track_width: float

    def __post_init__(self):
        if not (self.wheel_radius > 0 and self.track_width > 0):
            raise ValueError("wheel_radius and track_width must be > 0")


def diff_drive_forward(params: DiffDriveParams, wl: float, wr: float) -> Twist2D:
    r = params.wheel_radius
    return Twist2D(r * (wl + wr) / 2.0, r * (wr - wl) / params.track_width)


def diff_drive_inverse(params: DiffDriveParams, t: Twist2D) -> tuple[float, float]:
    """Wheel speeds (left, right) in rad/s that realise a body twist."""
    r, b = params.wheel_radius, params.track_width
    return (t.v - t.w * b / 2.0) / r, (t.v + t.w * b / 2.0) / r


def integrate_unicycle(p: Pose2D, t: Twist2D, dt: float) -> Pose2D:
    """Exact constant-twist arc integration."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if abs(t.w) < 1e-9:
        return Pose2D(p.x + t.v * math.cos(p.theta) * dt, p.y + t.v * math.sin(p.theta) * dt, p.theta)
    th1 = p.theta + t.w * dt
    r = t.v / t.w
    return Pose2D(
        p.x + r * (math.sin(th1) - math.sin(p.theta)),
        p.y - r * (math.cos(th1) - math.cos(p.theta)),
        th1,
    )
