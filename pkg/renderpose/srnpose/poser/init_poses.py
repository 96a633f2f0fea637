"""
Initial camera poses for refinement: a fixed 24-pose grid around the object, or four poses
around a reference estimate.
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from srnpose.constants.constants import (
    DEFAULT_NEIGHBOR_OFFSET_DEG,
    DEFAULT_RADIUS,
    FIXED_AZIMUTH_COUNT,
    FIXED_LATITUDES_DEG,
    POLE_CLAMP_DEG,
    STRATEGIES,
)
from srnpose.constants.messages import ErrorMessages
from srnpose.errors import PoleClampWarning
from srnpose.geometry import Pose6DoF, eye_on_sphere, look_at_origin, matrix_to_pose, sphere_angles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fixed24:
    radius: float = DEFAULT_RADIUS

    def __post_init__(self) -> None:
        if not self.radius > 0: raise ValueError(ErrorMessages.BAD_RADIUS)

    name = 'fixed24'


@dataclass(frozen=True)
class Neighbor4:
    reference: Pose6DoF
    offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG

    def __post_init__(self) -> None:
        if not 0 < self.offset_deg < 90: raise ValueError(ErrorMessages.BAD_OFFSET)

    name = 'neighbor4'


InitStrategy = Fixed24 | Neighbor4


def pose_looking_at_origin(eye) -> Pose6DoF:
    return matrix_to_pose(look_at_origin(eye))


def sample_fixed_24(radius: float = DEFAULT_RADIUS) -> list[Pose6DoF]:
    """
    Eight azimuths (0, 45, ..., 315 degrees) on each of the latitudes +45, 0 and -45 degrees,
    latitude-major, every camera aimed at the origin with no roll.
    """
    if not radius > 0: raise ValueError(ErrorMessages.BAD_RADIUS)
    poses = []
    for latitude in FIXED_LATITUDES_DEG:
        for k in range(FIXED_AZIMUTH_COUNT):
            azimuth = 2.0 * math.pi * k / FIXED_AZIMUTH_COUNT
            poses.append(pose_looking_at_origin(eye_on_sphere(radius, azimuth, math.radians(latitude))))
    return poses


def _tangents(azimuth: float, latitude: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit east and north tangents of the sphere at (azimuth, latitude)."""
    east = np.array([-math.sin(azimuth), math.cos(azimuth), 0.0])
    north = np.array([-math.sin(latitude) * math.cos(azimuth),
                      -math.sin(latitude) * math.sin(azimuth),
                      math.cos(latitude)])
    return east, north


def neighbor_eyes(reference: Pose6DoF, offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG) -> tuple[list[np.ndarray], list[bool]]:
    """
    Camera positions offset_deg away from the reference's along the great circles through it:
    above, below, left and right. Above/below keep the azimuth and are clamped to
    +-POLE_CLAMP_DEG latitude; the second list flags clamped moves.
    """
    if not 0 < offset_deg < 90: raise ValueError(ErrorMessages.BAD_OFFSET)
    radius, azimuth, latitude = sphere_angles(reference.t)
    if not radius > 0: raise ValueError(ErrorMessages.BAD_RADIUS)
    offset = math.radians(offset_deg)
    limit = math.radians(POLE_CLAMP_DEG)

    eyes, clamped = [], []
    for sign in (1.0, -1.0):
        target = latitude + sign * offset
        hit_pole = abs(target) > limit
        eyes.append(eye_on_sphere(radius, azimuth, max(-limit, min(limit, target))))
        clamped.append(hit_pole)

    unit = np.asarray(reference.t, dtype=np.float64) / radius
    east, _ = _tangents(azimuth, latitude)
    for sign in (-1.0, 1.0):
        eyes.append(radius * (math.cos(offset) * unit + sign * math.sin(offset) * east))
        clamped.append(False)
    return eyes, clamped


def sample_neighbor_4(reference: Pose6DoF, offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG) -> list[Pose6DoF]:
    """Four poses around `reference` (above, below, left, right), re-aimed at the origin with no roll."""
    poses, _ = neighbor_poses(reference, offset_deg)
    return poses


def neighbor_poses(reference: Pose6DoF, offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG) -> tuple[list[Pose6DoF], list[bool]]:
    eyes, clamped = neighbor_eyes(reference, offset_deg)
    if any(clamped):
        warnings.warn(PoleClampWarning(f"neighbor offset crosses a pole; latitude clamped to +-{POLE_CLAMP_DEG}"),
                      stacklevel=3)
        logger.warning(f"neighbor4 latitude clamped for lanes {[i for i, c in enumerate(clamped) if c]}")
    return [pose_looking_at_origin(eye) for eye in eyes], clamped


def initial_poses(strategy: InitStrategy) -> tuple[list[Pose6DoF], list[bool]]:
    """Initial poses of a strategy and, per pose, whether it was pole-clamped."""
    if isinstance(strategy, Fixed24):
        poses = sample_fixed_24(strategy.radius)
        return poses, [False] * len(poses)
    if isinstance(strategy, Neighbor4):
        return neighbor_poses(strategy.reference, strategy.offset_deg)
    raise ValueError(ErrorMessages.UNKNOWN_STRATEGY.format(strategy=strategy, choices=STRATEGIES))


def perturbed_reference(ground_truth: Pose6DoF, offset_deg: float, rng: np.random.Generator) -> Pose6DoF:
    """
    A stand-in for a prior estimate: the ground-truth camera moved offset_deg along a great
    circle in a random direction, re-aimed at the origin.
    """
    radius, azimuth, latitude = sphere_angles(ground_truth.t)
    east, north = _tangents(azimuth, latitude)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    offset = math.radians(offset_deg)
    unit = np.asarray(ground_truth.t, dtype=np.float64) / radius
    direction = math.cos(heading) * east + math.sin(heading) * north
    return pose_looking_at_origin(radius * (math.cos(offset) * unit + math.sin(offset) * direction))


def make_strategy(name: str, radius: float = DEFAULT_RADIUS, reference: Pose6DoF | None = None,
                  offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG) -> InitStrategy:
    if name == Fixed24.name: return Fixed24(radius)
    if name == Neighbor4.name:
        if reference is None: raise ValueError(ErrorMessages.NEED_REFERENCE)
        return Neighbor4(reference, offset_deg)
    raise ValueError(ErrorMessages.UNKNOWN_STRATEGY.format(strategy=name, choices=STRATEGIES))
