"""Rigid-transform and spatial-algebra math shared by every other module.

Conventions: right-handed frames, SI units (m, kg, s, rad, N·m), quaternions
stored (w, x, y, z) and renormalized after every composition, gravity default
(0, 0, -9.81). Six-vectors stack (angular; linear).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroAxis

QUAT_TOL = 1e-9
GRAVITY = np.array([0.0, 0.0, -9.81])


def _vec3(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(3)


# -- quaternion primitives (w, x, y, z) --------------------------------------
# scalar arithmetic throughout: these sit on the per-step hot path where
# numpy's per-call overhead dominates 3- and 4-vector work

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = math.sqrt(float(q @ q))
    if not math.isfinite(n) or n < QUAT_TOL:
        raise ZeroAxis("quaternion norm is zero")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a.tolist() if isinstance(a, np.ndarray) else a
    bw, bx, by, bz = b.tolist() if isinstance(b, np.ndarray) else b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def cross3(a, b) -> np.ndarray:
    ax, ay, az = a.tolist() if isinstance(a, np.ndarray) else a
    bx, by, bz = b.tolist() if isinstance(b, np.ndarray) else b
    return np.array([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    w, x, y, z = q.tolist() if isinstance(q, np.ndarray) else q
    vx, vy, vz = v.tolist() if isinstance(v, np.ndarray) else v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([vx + w * tx + (y * tz - z * ty),
                     vy + w * ty + (z * tx - x * tz),
                     vz + w * tz + (x * ty - y * tx)])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion from a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle of a unit quaternion, in [0, pi]."""
    w = min(1.0, abs(float(q[0])))
    return 2.0 * math.acos(w)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector (axis scaled by angle) of a unit quaternion."""
    w, x, y, z = q
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(max(0.0, 1.0 - w * w))
    if s < 1e-12:
        return 2.0 * np.array([x, y, z])
    angle = 2.0 * math.atan2(s, w)
    return (angle / s) * np.array([x, y, z])


def axis_angle_to_quaternion(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by `angle` about a unit `axis`.

    Raises ZeroAxis when the axis norm is below 1e-9.
    """
    a = _vec3(axis)
    n = np.linalg.norm(a)
    if n < QUAT_TOL:
        raise ZeroAxis("rotation axis has zero norm")
    a = a / n
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), a[0] * s, a[1] * s, a[2] * s])


# -- rigid transforms ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid pose: unit quaternion (w, x, y, z) plus translation in meters.

    Maps child-frame coordinates into the parent frame:
    ``x_parent = R(rotation) @ x_child + translation``.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "translation", _vec3(self.translation))

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Transform":
        return Transform(axis_angle_to_quaternion(axis, angle), translation)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Transform":
        m = np.asarray(m, dtype=float)
        return Transform(quat_from_matrix(m[:3, :3]), m[:3, 3])

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return quat_to_matrix(self.rotation)

    def matrix4(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.matrix()
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Transform":
        qc = quat_conjugate(self.rotation)
        return Transform(qc, -quat_rotate(qc, self.translation))

    def apply(self, point) -> np.ndarray:
        return quat_rotate(self.rotation, _vec3(point)) + self.translation

    def apply_vector(self, v) -> np.ndarray:
        """Rotate a direction without translating it."""
        return quat_rotate(self.rotation, _vec3(v))

    def __matmul__(self, other: "Transform") -> "Transform":
        return compose(self, other)

    def approx_eq(self, other: "Transform", tol: float = 1e-9) -> bool:
        dq = min(np.linalg.norm(self.rotation - other.rotation),
                 np.linalg.norm(self.rotation + other.rotation))
        return dq <= tol and np.allclose(self.translation, other.translation, atol=tol, rtol=0)

    def to_dict(self) -> dict:
        return {"rotation": [float(v) for v in self.rotation],
                "translation": [float(v) for v in self.translation]}

    @staticmethod
    def from_dict(d: dict) -> "Transform":
        return Transform(np.array(d["rotation"], dtype=float),
                         np.array(d["translation"], dtype=float))


def compose(a: Transform, b: Transform) -> Transform:
    """Transform applying b first, then a. Rotation is renormalized."""
    return Transform(quat_multiply(a.rotation, b.rotation),
                     quat_rotate(a.rotation, b.translation) + a.translation)


def transform_point(t: Transform, p) -> np.ndarray:
    """Rotate then translate a point."""
    return t.apply(p)


# -- spatial vectors and inertia ---------------------------------------------

@dataclass(frozen=True, eq=False)
class SpatialVector:
    """Six-vector: angular part stacked over linear part."""

    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "angular", _vec3(self.angular))
        object.__setattr__(self, "linear", _vec3(self.linear))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])


@dataclass(frozen=True, eq=False)
class SpatialInertia:
    """Mass, center of mass (body frame) and rotational inertia about the com."""

    mass: float
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "com", _vec3(self.com))
        inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia", inertia)
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if np.max(np.abs(inertia - inertia.T)) > 1e-12:
            raise ValueError("inertia matrix must be symmetric")
        eig = np.linalg.eigvalsh(inertia)
        if eig.min() < -1e-9:
            raise ValueError("inertia matrix must be positive semi-definite")

    def scaled(self, factor: float) -> "SpatialInertia":
        """Uniform density scaling: mass and inertia scale together."""
        return SpatialInertia(self.mass * factor, self.com, self.inertia * factor)

    def matrix66(self) -> np.ndarray:
        """Spatial inertia about the body-frame origin."""
        cx = skew(self.com)
        m = self.mass
        top = self.inertia + m * (cx @ cx.T)
        out = np.zeros((6, 6))
        out[:3, :3] = top
        out[:3, 3:] = m * cx
        out[3:, :3] = m * cx.T
        out[3:, 3:] = m * np.eye(3)
        return out


def skew(v) -> np.ndarray:
    x, y, z = v.tolist() if isinstance(v, np.ndarray) else v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def spatial_transform(t: Transform) -> np.ndarray:
    """6x6 motion transform taking parent-frame vectors into the child frame,
    where `t` is the child pose expressed in the parent frame."""
    e = t.matrix().T
    out = np.zeros((6, 6))
    out[:3, :3] = e
    out[3:, 3:] = e
    out[3:, :3] = -e @ skew(t.translation)
    return out


def spatial_transform_force(t: Transform) -> np.ndarray:
    """6x6 force transform paired with spatial_transform (dual)."""
    e = t.matrix().T
    out = np.zeros((6, 6))
    out[:3, :3] = e
    out[3:, 3:] = e
    out[:3, 3:] = -e @ skew(t.translation)
    return out


def crm(v: np.ndarray) -> np.ndarray:
    """Motion cross-product operator of a 6-vector."""
    w = skew(v[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = w
    out[3:, 3:] = w
    out[3:, :3] = skew(v[3:])
    return out


def crf(v: np.ndarray) -> np.ndarray:
    """Force cross-product operator (dual of crm)."""
    return -crm(v).T


def spatial_cross_motion(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """crm(v) @ m without materializing the 6x6 operator."""
    w, vl = v[:3], v[3:]
    return np.concatenate([cross3(w, m[:3]), cross3(vl, m[:3]) + cross3(w, m[3:])])


def spatial_cross_force(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    """crf(v) @ f without materializing the 6x6 operator."""
    w, vl = v[:3], v[3:]
    return np.concatenate([cross3(w, f[:3]) + cross3(vl, f[3:]), cross3(w, f[3:])])
