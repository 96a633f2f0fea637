"""
Rigid camera poses, the pinhole camera model and pose-error metrics.

Conventions: transforms are camera-to-world, the camera looks down its own -Z axis with +Y up
in the image, pixel centres sit at (u + 0.5, v + 0.5), the world is +Z up and azimuth is
measured in the XY plane from +X. Angles are radians everywhere except in error reports.
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from srnpose import diffcore as dc
from srnpose.constants.constants import (
    ALTERNATE_UP,
    DEFAULT_FOCAL_RATIO,
    DEG,
    GIMBAL_COS_THRESHOLD,
    ORTHONORMAL_TOLERANCE,
    PARALLEL_TOLERANCE,
    WORLD_UP,
)
from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore import Tensor
from srnpose.errors import GimbalWarning

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pose6DoF:
    """Three rotation angles about X, Y, Z (radians, unwrapped) and three translations."""
    theta: tuple[float, float, float]
    t: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'theta', tuple(float(v) for v in self.theta))
        object.__setattr__(self, 't', tuple(float(v) for v in self.t))
        if len(self.theta) != 3 or len(self.t) != 3: raise ValueError(ErrorMessages.NON_FINITE_POSE)
        if not all(math.isfinite(v) for v in self.theta + self.t): raise ValueError(ErrorMessages.NON_FINITE_POSE)

    @classmethod
    def from_array(cls, values) -> 'Pose6DoF':
        values = np.asarray(values, dtype=np.float64).reshape(6)
        return cls(tuple(values[:3]), tuple(values[3:]))

    @classmethod
    def identity(cls) -> 'Pose6DoF':
        return cls((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    def as_array(self) -> np.ndarray:
        return np.array(self.theta + self.t, dtype=np.float64)

    def as_tensor(self, requires_grad: bool = True, name: str = 'pose') -> Tensor:
        return Tensor(self.as_array(), requires_grad=requires_grad, name=name)

    def to_dict(self) -> dict:
        return {
            'theta_rad': list(self.theta),
            'theta_deg': [v * DEG for v in self.theta],
            't': list(self.t),
        }


@dataclass(frozen=True)
class Intrinsics:
    f: float
    cx: float
    cy: float
    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1: raise ValueError(ErrorMessages.BAD_IMAGE_DIMS)
        if not self.f > 0: raise ValueError(ErrorMessages.BAD_FOCAL)
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height): raise ValueError(
            ErrorMessages.BAD_PRINCIPAL)

    @classmethod
    def square(cls, size: int, focal_ratio: float = DEFAULT_FOCAL_RATIO) -> 'Intrinsics':
        return cls(f=focal_ratio * size, cx=size / 2.0, cy=size / 2.0, height=size, width=size)

    @property
    def pixel_count(self) -> int:
        return self.height * self.width


# ====Rotations====

def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_product(theta) -> np.ndarray:
    """R = Rz(theta3) @ Ry(theta2) @ Rx(theta1): rotate about X first, then Y, then Z."""
    return _rz(theta[2]) @ _ry(theta[1]) @ _rx(theta[0])


def _closed_form(c1, s1, c2, s2, c3, s3):
    return [
        [c2 * c3, s1 * s2 * c3 - c1 * s3, c1 * s2 * c3 + s1 * s3],
        [c2 * s3, s1 * s2 * s3 + c1 * c3, c1 * s2 * s3 - s1 * c3],
        [-s2, s1 * c2, c1 * c2],
    ]


def pose_to_matrix(p: 'Pose6DoF | Tensor'):
    """
    Closed-form rigid transform from six pose scalars.
    Given a Pose6DoF returns a (4, 4) numpy array; given a (6,) Tensor returns a (4, 4) Tensor
    differentiable w.r.t. all six entries.
    :param p: pose as Pose6DoF or Tensor [theta1, theta2, theta3, t1, t2, t3]
    :return: camera-to-world transform
    """
    if isinstance(p, Tensor):
        return _pose_to_matrix_tensor(p)
    c1, c2, c3 = (math.cos(a) for a in p.theta)
    s1, s2, s3 = (math.sin(a) for a in p.theta)
    matrix = np.eye(4)
    matrix[:3, :3] = _closed_form(c1, s1, c2, s2, c3, s3)
    matrix[:3, 3] = p.t
    return matrix


def _pose_to_matrix_tensor(pose: Tensor) -> Tensor:
    angles = [pose[i:i + 1] for i in range(3)]
    t = [pose[i:i + 1] for i in range(3, 6)]
    c1, c2, c3 = (dc.cos(a) for a in angles)
    s1, s2, s3 = (dc.sin(a) for a in angles)
    rows = _closed_form(c1, s1, c2, s2, c3, s3)
    body = [dc.concat(row + [t[i]]) for i, row in enumerate(rows)]
    bottom = dc.as_tensor(np.array([0.0, 0.0, 0.0, 1.0]))
    return dc.reshape(dc.concat(body + [bottom]), (4, 4))


def is_rigid(matrix: np.ndarray, tol: float = ORTHONORMAL_TOLERANCE) -> bool:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (4, 4) or not np.all(np.isfinite(matrix)): return False
    rotation = matrix[:3, :3]
    return (np.allclose(matrix[3], (0.0, 0.0, 0.0, 1.0), atol=tol, rtol=0.0)
            and np.allclose(rotation.T @ rotation, np.eye(3), atol=tol, rtol=0.0)
            and abs(np.linalg.det(rotation) - 1.0) <= tol)


def matrix_to_pose(matrix: np.ndarray) -> Pose6DoF:
    """
    Inverse of pose_to_matrix on the |theta2| < pi/2 branch.
    Near gimbal lock (|cos theta2| < 1e-6) theta1 is pinned to 0, theta3 absorbs the remaining
    rotation and a GimbalWarning is issued.
    :param matrix: (4, 4) rigid camera-to-world transform
    :return: Pose6DoF
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    r = matrix[:3, :3]
    s2 = -float(np.clip(r[2, 0], -1.0, 1.0))
    theta2 = math.asin(s2)
    if abs(math.cos(theta2)) < GIMBAL_COS_THRESHOLD:
        warnings.warn(GimbalWarning(f"gimbal lock: theta2={theta2:.6f}, choosing theta1=0"), stacklevel=2)
        logger.warning(f"matrix_to_pose hit gimbal lock (theta2={theta2:.6f})")
        theta2 = math.copysign(math.pi / 2.0, s2)
        theta1 = 0.0
        theta3 = math.atan2(-r[0, 1], r[1, 1])
    else:
        theta1 = math.atan2(r[2, 1], r[2, 2])
        theta3 = math.atan2(r[1, 0], r[0, 0])
    return Pose6DoF((theta1, theta2, theta3), tuple(matrix[:3, 3]))


def look_at(eye, target=(0.0, 0.0, 0.0), up_hint=WORLD_UP) -> np.ndarray:
    """
    Camera-to-world transform of a camera at `eye` aimed at `target` with zero roll.
    The camera's -Z axis points at the target and its X axis is perpendicular to up_hint.
    :raises ValueError: if eye == target, or the view direction is parallel to up_hint
                        (callers near a pole should retry with an alternate up_hint)
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up_hint, dtype=np.float64)
    forward = target - eye
    distance = np.linalg.norm(forward)
    if distance < PARALLEL_TOLERANCE: raise ValueError(ErrorMessages.EYE_IS_TARGET)
    forward = forward / distance
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < PARALLEL_TOLERANCE * max(1.0, np.linalg.norm(up)): raise ValueError(ErrorMessages.PARALLEL_UP)
    right = right / norm
    true_up = np.cross(right, forward)
    matrix = np.eye(4)
    matrix[:3, 0] = right
    matrix[:3, 1] = true_up
    matrix[:3, 2] = -forward
    matrix[:3, 3] = eye
    return matrix


def look_at_origin(eye) -> np.ndarray:
    """look_at the world origin, swapping to the alternate up hint at the poles."""
    try:
        return look_at(eye, (0.0, 0.0, 0.0), WORLD_UP)
    except ValueError as e:
        if str(e) != ErrorMessages.PARALLEL_UP: raise
        return look_at(eye, (0.0, 0.0, 0.0), ALTERNATE_UP)


def eye_on_sphere(radius: float, azimuth: float, latitude: float) -> np.ndarray:
    return radius * np.array([
        math.cos(latitude) * math.cos(azimuth),
        math.cos(latitude) * math.sin(azimuth),
        math.sin(latitude),
    ])


def sphere_angles(eye) -> tuple[float, float, float]:
    """(radius, azimuth, latitude) of a point."""
    x, y, z = (float(v) for v in eye)
    radius = math.sqrt(x * x + y * y + z * z)
    return radius, math.atan2(y, x), math.asin(max(-1.0, min(1.0, z / radius)))


# ====Rays====

def camera_directions(K: Intrinsics) -> np.ndarray:
    """Unit directions in the camera frame, one row per pixel, row-major over (v, u)."""
    v, u = np.meshgrid(np.arange(K.height, dtype=np.float64), np.arange(K.width, dtype=np.float64), indexing='ij')
    x = (u + 0.5 - K.cx) / K.f
    y = -(v + 0.5 - K.cy) / K.f
    directions = np.stack([x, y, -np.ones_like(x)], axis=-1).reshape(-1, 3)
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def ray_directions(K: Intrinsics, T):
    """
    Per-pixel unit world directions and the camera origin.
    Works on a numpy transform or on a (4, 4) Tensor, in which case both outputs are Tensors
    carrying the transform's gradient path.
    :return: (directions (H*W, 3), origin (3,))
    """
    local = camera_directions(K)
    if isinstance(T, Tensor):
        rotation = T[0:3, 0:3]
        return dc.matmul(dc.as_tensor(local), rotation.T), T[0:3, 3]
    T = np.asarray(T, dtype=np.float64)
    return local @ T[:3, :3].T, T[:3, 3].copy()


# ====Errors====

def translation_error(t_pred, t_gt) -> float:
    delta = np.asarray(t_pred, dtype=np.float64) - np.asarray(t_gt, dtype=np.float64)
    return float(np.sqrt(np.sum(delta * delta)))


def rotation_error(r_pred, r_gt) -> float:
    """Geodesic angle in degrees between two rotations (3x3 or 4x4 inputs)."""
    r_pred = np.asarray(r_pred, dtype=np.float64)[:3, :3]
    r_gt = np.asarray(r_gt, dtype=np.float64)[:3, :3]
    cosine = 0.5 * (np.trace(r_pred @ r_gt.T) - 1.0)
    return float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))


def pose_errors(pred: Pose6DoF, gt: Pose6DoF) -> tuple[float, float]:
    """(rotation error in degrees, translation error) between two poses."""
    return (rotation_error(pose_to_matrix(pred), pose_to_matrix(gt)),
            translation_error(pred.t, gt.t))
