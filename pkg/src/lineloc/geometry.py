"""SE(3) pose math, pinhole projection, and 2D line primitives.

Conventions used throughout the package:

* A :class:`Pose` maps world coordinates into the camera frame,
  ``p_cam = R @ p_world + t``.
* Rotations are stored as unit quaternions in ``(w, x, y, z)`` order.
* Tangent-space increments are 6-vectors ``[rho, phi]`` (translation
  first, rotation second) applied by *left* multiplication of their
  exponential: ``T_new = exp(delta) @ T``.
* Pixel coordinates are ``(u, v)`` with ``u`` along image columns.
* 2D lines are stored normalized, ``a**2 + b**2 == 1``, with the sign
  convention ``c <= 0`` (ties broken toward ``a > 0``, then ``b > 0``),
  so the signed distance of a pixel from the line is the plain dot
  product ``a*u + b*v + c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateSegmentError

DEPTH_EPSILON = 1e-6
"""Depth cull threshold in meters; points closer than this are rejected."""

# below this angle the closed-form rotation coefficients cancel
# catastrophically; quartic Taylor expansions are exact to ~1e-18 there
_SMALL_ANGLE = 1e-2


def _readonly(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


def skew(v) -> np.ndarray:
    """Cross-product matrix such that ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)
# ---------------------------------------------------------------------------

def _quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _quat_from_matrix(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: branch on the largest of w, x, y, z.
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def _quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(phi))
    half = 0.5 * angle
    if angle < _SMALL_ANGLE:
        angle2 = angle * angle
        factor = 0.5 - angle2 / 48.0 + angle2 * angle2 / 3840.0
    else:
        factor = math.sin(half) / angle
    return np.concatenate(([math.cos(half)], factor * np.asarray(phi, dtype=float)))


def _rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    w, v = q[0], np.array(q[1:])
    if w < 0.0:  # pick the representative with angle in [0, pi]
        w, v = -w, -v
    nv = float(np.linalg.norm(v))
    if nv < 1e-12:
        return 2.0 * v
    return (2.0 * math.atan2(nv, w) / nv) * v


def _left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta2 = float(np.dot(phi, phi))
    k = skew(phi)
    if theta2 < _SMALL_ANGLE**2:
        a = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
        b = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
    else:
        theta = math.sqrt(theta2)
        a = (1.0 - math.cos(theta)) / theta2
        b = (theta - math.sin(theta)) / (theta2 * theta)
    return np.eye(3) + a * k + b * (k @ k)


def _left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta2 = float(np.dot(phi, phi))
    k = skew(phi)
    if theta2 < _SMALL_ANGLE**2:
        c = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    else:
        theta = math.sqrt(theta2)
        c = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta2
    return np.eye(3) - 0.5 * k + c * (k @ k)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform taking world points into the camera frame.

    Parameters
    ----------
    rotation : array_like, shape (4,)
        Unit quaternion ``(w, x, y, z)``. Normalized on construction;
        inputs further than 1e-6 from unit norm are rejected.
    translation : array_like, shape (3,)
        Translation in meters, ``p_cam = R @ p_world + translation``.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float).reshape(4)
        norm = float(np.linalg.norm(q))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        q = q / norm
        if q[0] < 0.0:
            q = -q
        q = q + 0.0  # fold -0.0 into +0.0 for reproducible serialization
        object.__setattr__(self, "rotation", _readonly(q, (4,)))
        object.__setattr__(self, "translation", _readonly(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rt(cls, rotation_matrix, translation) -> "Pose":
        return cls(_quat_from_matrix(np.asarray(rotation_matrix, dtype=float)), translation)

    @classmethod
    def from_matrix(cls, transform) -> "Pose":
        t = np.asarray(transform, dtype=float)
        return cls.from_rt(t[:3, :3], t[:3, 3])

    @property
    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.translation
        return out

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self @ other`` (``other`` is applied first)."""
        q = _quat_multiply(self.rotation, other.rotation)
        t = _quat_rotate(self.rotation, other.translation) + self.translation
        return Pose(q, t)

    def inverse(self) -> "Pose":
        q_inv = np.array([self.rotation[0], *(-self.rotation[1:])])
        return Pose(q_inv, -_quat_rotate(q_inv, self.translation))

    def transform(self, points) -> np.ndarray:
        """Map world points (shape ``(3,)`` or ``(n, 3)``) into the camera frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Position of the camera origin expressed in the world frame."""
        return -(self.rotation_matrix.T @ self.translation)


@dataclass(frozen=True, eq=False)
class Twist:
    """Tangent-space motion ``[rho, phi]``: translation (m) and rotation (rad)."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        rho = _readonly(self.rho, (3,))
        phi = _readonly(self.phi, (3,))
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model without distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: float
    image_height: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0.0 <= self.cx <= self.image_width and 0.0 <= self.cy <= self.image_height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Line2D:
    """Normalized general-form 2D line ``a*u + b*v + c = 0`` with endpoints."""

    a: float
    b: float
    c: float
    p_start: np.ndarray
    p_end: np.ndarray

    def __post_init__(self):
        p_start = _readonly(self.p_start, (2,))
        p_end = _readonly(self.p_end, (2,))
        if abs(self.a * self.a + self.b * self.b - 1.0) > 1e-12:
            raise ValueError("line coefficients are not normalized")
        for p in (p_start, p_end):
            if abs(self.a * p[0] + self.b * p[1] + self.c) > 1e-6:
                raise ValueError("endpoint does not lie on the line")
        if np.array_equal(p_start, p_end):
            raise ValueError("endpoints must be distinct")
        object.__setattr__(self, "p_start", p_start)
        object.__setattr__(self, "p_end", p_end)

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.a, self.b])

    @property
    def direction(self) -> np.ndarray:
        """Unit direction along the line (sign is arbitrary)."""
        return np.array([-self.b, self.a])

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p_end - self.p_start))


@dataclass(frozen=True, eq=False)
class LineSegment3D:
    """3D line segment in the world frame, in meters."""

    id: int
    p_start: np.ndarray
    p_end: np.ndarray

    def __post_init__(self):
        p_start = _readonly(self.p_start, (3,))
        p_end = _readonly(self.p_end, (3,))
        if not np.linalg.norm(p_end - p_start) > 0.0:
            raise ValueError("segment length must be positive")
        object.__setattr__(self, "p_start", p_start)
        object.__setattr__(self, "p_end", p_end)

    @property
    def endpoints(self) -> np.ndarray:
        return np.vstack([self.p_start, self.p_end])


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def exp_map(xi: Twist) -> Pose:
    """SE(3) exponential: rotation from ``phi``, translation ``V(phi) @ rho``."""
    q = _quat_from_rotvec(xi.phi)
    t = _left_jacobian(xi.phi) @ xi.rho
    return Pose(q, t)


def log_map(pose: Pose) -> Twist:
    """Inverse of :func:`exp_map`; well defined for rotation angles below pi."""
    phi = _rotvec_from_quat(pose.rotation)
    rho = _left_jacobian_inv(phi) @ pose.translation
    return Twist(rho, phi)


def apply_left_perturbation(pose: Pose, delta: Twist) -> Pose:
    """Return ``exp(delta) @ pose``, the update convention of the solver."""
    return exp_map(delta).compose(pose)


def world_to_camera(pose_wb: Pose, extrinsic_bc: Pose) -> Pose:
    """Compose a world-to-body pose with a body-to-camera extrinsic."""
    return extrinsic_bc.compose(pose_wb)


def project(pose_wc: Pose, k: CameraIntrinsics, p_world) -> np.ndarray:
    """Project a world point to pixel coordinates.

    Raises
    ------
    BehindCameraError
        If the transformed depth is at or below :data:`DEPTH_EPSILON`;
        callers are expected to cull such points.
    """
    p_cam = pose_wc.transform(np.asarray(p_world, dtype=float))
    z = p_cam[2]
    if z <= DEPTH_EPSILON:
        raise BehindCameraError(f"point depth {z:.3g} m is not in front of the camera")
    return np.array([k.fx * p_cam[0] / z + k.cx, k.fy * p_cam[1] / z + k.cy])


def line_from_endpoints(p1, p2) -> Line2D:
    """Build the normalized 2D line through two pixel points.

    Raises
    ------
    DegenerateSegmentError
        If the endpoints are closer than 1e-9 px.
    """
    p1 = np.asarray(p1, dtype=float).reshape(2)
    p2 = np.asarray(p2, dtype=float).reshape(2)
    d = p2 - p1
    length = float(np.hypot(d[0], d[1]))
    if length <= 1e-9:
        raise DegenerateSegmentError("coincident endpoints cannot define a line")
    a = -d[1] / length
    b = d[0] / length
    c = -(a * p1[0] + b * p1[1])
    if c > 0.0 or (c == 0.0 and (a < 0.0 or (a == 0.0 and b < 0.0))):
        a, b, c = -a, -b, -c
    return Line2D(a + 0.0, b + 0.0, c + 0.0, p1, p2)


def foot_point(line: Line2D, p) -> np.ndarray:
    """Orthogonal projection of a pixel onto the line."""
    p = np.asarray(p, dtype=float).reshape(2)
    return p - signed_distance(line, p) * line.normal


def signed_distance(line: Line2D, p) -> float:
    """Signed point-to-line distance; the magnitude equals the foot-point distance."""
    p = np.asarray(p, dtype=float).reshape(2)
    return float(line.a * p[0] + line.b * p[1] + line.c)
