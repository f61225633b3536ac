"""Rigid transforms on SE(3) stored as unit quaternion + translation.

Quaternions are scalar-first ``(w, x, y, z)``. ``compose(a, b)`` maps a point
through ``b`` first and then ``a``, so ``world_T_obj = compose(world_T_G, G_T_obj)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_SLERP_LINEAR_DOT = 1.0 - 1e-12


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; picks the largest diagonal term for stability."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis / n])


def quat_from_rotvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return quat_from_axis_angle(v, float(np.linalg.norm(v)))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = q if q[0] >= 0 else -q
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        # small-angle limit of angle/sin(angle/2)
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(s, q[0])
    return q[1:] * (angle / s)


def quat_angle(q: np.ndarray) -> float:
    """Geodesic rotation angle in [0, pi]; insensitive to the q/-q sign."""
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), abs(float(q[0])))


class PoseVector(NamedTuple):
    """Six-parameter pose: meters and radians, fixed-axis X-Y-Z roll/pitch/yaw."""

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError(f"invalid quaternion {self.rotation!r}")
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError(f"non-finite translation {self.translation!r}")
        q = q / n
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_translation(cls, xyz) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), xyz)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(quat_from_axis_angle(axis, angle), translation)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(matrix_to_quat(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_array(cls, a) -> "RigidTransform":
        """Inverse of :meth:`as_array`: ``(x, y, z, qw, qx, qy, qz)``."""
        a = np.asarray(a, dtype=float)
        return cls(a[3:7], a[:3])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix().T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def to_pose_vector(self) -> PoseVector:
        return transform_to_pose_vector(self)[0]

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"RigidTransform(t=({t}), q=({q}))"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a ∘ b``: points go through ``b`` and then ``a``."""
    q = quat_mul(a.rotation, b.rotation)
    t = a.rotation_matrix() @ b.translation + a.translation
    return RigidTransform(q, t)


def invert(t: RigidTransform) -> RigidTransform:
    qi = quat_conj(t.rotation)
    return RigidTransform(qi, -(quat_to_matrix(qi) @ t.translation))


def _axis_quat(axis: int, angle: float) -> np.ndarray:
    q = np.zeros(4)
    q[0] = math.cos(0.5 * angle)
    q[1 + axis] = math.sin(0.5 * angle)
    return q


def pose_vector_to_transform(p) -> RigidTransform:
    """Rotation is ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    p = PoseVector(*(float(v) for v in p))
    if not all(math.isfinite(v) for v in p):
        raise ValueError(f"non-finite pose vector {p}")
    q = quat_mul(_axis_quat(2, p.yaw), quat_mul(_axis_quat(1, p.pitch), _axis_quat(0, p.roll)))
    return RigidTransform(q, (p.x, p.y, p.z))


def transform_to_pose_vector(t: RigidTransform, singular_tol: float = 1e-9) -> tuple[PoseVector, bool]:
    """Return ``(pose_vector, degenerate)``.

    At ``|pitch| = pi/2`` roll and yaw are not separable; roll is set to 0 and
    ``degenerate`` is True.
    """
    m = t.rotation_matrix()
    cos_pitch = math.hypot(m[0, 0], m[1, 0])
    pitch = math.atan2(-m[2, 0], cos_pitch)
    degenerate = cos_pitch < singular_tol
    if degenerate:
        roll = 0.0
        yaw = math.atan2(-m[0, 1], m[1, 1])
    else:
        roll = math.atan2(m[2, 1], m[2, 2])
        yaw = math.atan2(m[1, 0], m[0, 0])
    x, y, z = (float(v) for v in t.translation)
    return PoseVector(x, y, z, roll, pitch, yaw), degenerate


def slerp(qa: np.ndarray, qb: np.ndarray, s: float) -> np.ndarray:
    d = float(np.dot(qa, qb))
    if d < 0.0:
        qb, d = -qb, -d
    if d > _SLERP_LINEAR_DOT:
        q = qa + s * (qb - qa)
        return q / np.linalg.norm(q)
    theta = math.acos(min(d, 1.0))
    sin_theta = math.sin(theta)
    return (math.sin((1.0 - s) * theta) * qa + math.sin(s * theta) * qb) / sin_theta


def interpolate(a: RigidTransform, b: RigidTransform, s: float) -> RigidTransform:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter {s} outside [0, 1]")
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    t = (1.0 - s) * a.translation + s * b.translation
    return RigidTransform(slerp(a.rotation, b.rotation, s), t)


def interpolate_many(a: RigidTransform, b: RigidTransform, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`interpolate`; returns ``(quats (K,4), translations (K,3))``."""
    s = np.asarray(s, dtype=float)
    qa, qb = a.rotation, b.rotation
    d = float(np.dot(qa, qb))
    if d < 0.0:
        qb, d = -qb, -d
    if d > _SLERP_LINEAR_DOT:
        q = qa[None, :] + s[:, None] * (qb - qa)[None, :]
    else:
        theta = math.acos(min(d, 1.0))
        wa = np.sin((1.0 - s) * theta) / math.sin(theta)
        wb = np.sin(s * theta) / math.sin(theta)
        q = wa[:, None] * qa[None, :] + wb[:, None] * qb[None, :]
    q /= np.linalg.norm(q, axis=1)[:, None]
    t = (1.0 - s)[:, None] * a.translation[None, :] + s[:, None] * b.translation[None, :]
    # endpoints are reproduced bit-exactly
    q[s == 0.0] = a.rotation
    t[s == 0.0] = a.translation
    q[s == 1.0] = b.rotation
    t[s == 1.0] = b.translation
    return q, t


def rotation_angle_between(a: RigidTransform, b: RigidTransform) -> float:
    # atan2 form keeps precision near 0
    return quat_angle(quat_mul(quat_conj(a.rotation), b.rotation))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform on SO(3) (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    return np.array(
        [
            b * math.cos(2 * math.pi * u3),
            a * math.sin(2 * math.pi * u2),
            a * math.cos(2 * math.pi * u2),
            b * math.sin(2 * math.pi * u3),
        ]
    )
