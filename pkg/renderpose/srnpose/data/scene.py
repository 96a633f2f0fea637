"""
Synthetic scenes of coloured spheres and axis-aligned boxes, an analytic ray-caster that
produces their ground-truth images, and the camera paths used for train and test views.
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from srnpose.constants.constants import (
    BACKGROUND_COLOR,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_PRIMITIVES,
    DEFAULT_SPIRAL_TURNS,
)
from srnpose.constants.messages import ErrorMessages
from srnpose.data.dataset_io import InstanceViews, MultiViewDataset, View, quantize
from srnpose.geometry import Intrinsics, eye_on_sphere, look_at_origin, ray_directions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: tuple[float, float, float]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=np.float64)
        return c - self.radius, c + self.radius

    def transformed(self, shift: np.ndarray, scale: float) -> 'Sphere':
        return Sphere(tuple((np.asarray(self.center) - shift) * scale), self.radius * scale, self.albedo)

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Nearest positive hit distance per ray, inf on a miss."""
        oc = origin - np.asarray(self.center, dtype=np.float64)
        b = directions @ oc
        c = oc @ oc - self.radius ** 2
        disc = b * b - c
        hit = disc >= 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        near, far = -b - root, -b + root
        t = np.where(near > 0.0, near, far)
        return np.where(hit & (t > 0.0), t, np.inf)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    albedo: tuple[float, float, float]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=np.float64)
        half = 0.5 * np.asarray(self.size, dtype=np.float64)
        return c - half, c + half

    def transformed(self, shift: np.ndarray, scale: float) -> 'Box':
        return Box(tuple((np.asarray(self.center) - shift) * scale), tuple(np.asarray(self.size) * scale), self.albedo)

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        low, high = self.bounds()
        with np.errstate(divide='ignore', invalid='ignore'):
            inverse = 1.0 / directions
            t1 = (low - origin) * inverse
            t2 = (high - origin) * inverse
        # axis-parallel rays outside a slab never hit
        parallel = directions == 0.0
        outside = parallel & ((origin < low) | (origin > high))
        t_min = np.where(parallel, -np.inf, np.minimum(t1, t2))
        t_max = np.where(parallel, np.inf, np.maximum(t1, t2))
        near = t_min.max(axis=1)
        far = t_max.min(axis=1)
        hit = (near <= far) & (far > 0.0) & ~outside.any(axis=1)
        t = np.where(near > 0.0, near, far)
        return np.where(hit, t, np.inf)


Primitive = Sphere | Box


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple[Primitive, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'primitives', tuple(self.primitives))
        if not self.primitives: raise ValueError(ErrorMessages.NO_PRIMITIVES)
        for index, primitive in enumerate(self.primitives):
            if isinstance(primitive, Sphere) and not primitive.radius > 0: raise ValueError(
                ErrorMessages.BAD_PRIMITIVE.format(index=index, reason="sphere radius must be > 0"))
            if isinstance(primitive, Box) and not all(s > 0 for s in primitive.size): raise ValueError(
                ErrorMessages.BAD_PRIMITIVE.format(index=index, reason="box sizes must be > 0"))
            if not all(0.0 <= a <= 1.0 for a in primitive.albedo): raise ValueError(
                ErrorMessages.BAD_PRIMITIVE.format(index=index, reason="albedo must lie in [0, 1]"))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lows, highs = zip(*(p.bounds() for p in self.primitives))
        return np.min(lows, axis=0), np.max(highs, axis=0)

    def diagonal(self) -> float:
        low, high = self.bounds()
        return float(np.linalg.norm(high - low))

    def normalized(self) -> 'SceneSpec':
        """Centre the bounding box on the origin and scale it to unit diagonal."""
        low, high = self.bounds()
        shift = 0.5 * (low + high)
        scale = 1.0 / float(np.linalg.norm(high - low))
        return SceneSpec(tuple(p.transformed(shift, scale) for p in self.primitives))

    def to_dict(self) -> dict:
        return {'primitives': [
            {'kind': type(p).__name__.lower(), **{k: list(v) if isinstance(v, tuple) else v
                                                  for k, v in p.__dict__.items()}}
            for p in self.primitives]}


def random_scene_spec(rng: np.random.Generator, count: int = DEFAULT_PRIMITIVES) -> SceneSpec:
    """A normalized scene of `count` random spheres and boxes with saturated colours."""
    primitives = []
    for index in range(count):
        center = tuple(rng.uniform(-0.3, 0.3, size=3))
        albedo = tuple(rng.uniform(0.05, 0.85, size=3))
        if index % 2 == 0:
            primitives.append(Sphere(center, float(rng.uniform(0.15, 0.35)), albedo))
        else:
            primitives.append(Box(center, tuple(rng.uniform(0.2, 0.5, size=3)), albedo))
    return SceneSpec(tuple(primitives)).normalized()


def cast(spec: SceneSpec, pose: np.ndarray, K: Intrinsics) -> np.ndarray:
    """
    Ground-truth image: nearest-hit primitive albedo per pixel, white background, no lighting.
    :return: (H, W, 3) array quantized to multiples of 1/255
    """
    directions, origin = ray_directions(K, pose)
    depth = np.full(K.pixel_count, np.inf)
    colors = np.tile(np.asarray(BACKGROUND_COLOR, dtype=np.float64), (K.pixel_count, 1))
    for primitive in spec.primitives:
        t = primitive.intersect(origin, directions)
        closer = t < depth
        depth = np.where(closer, t, depth)
        colors[closer] = primitive.albedo
    return quantize(colors.reshape(K.height, K.width, 3))


@dataclass(frozen=True)
class SphereRandom:
    """Eyes drawn uniformly on the sphere."""
    seed: int = 0

    def eyes(self, n: int, radius: float) -> list[np.ndarray]:
        rng = np.random.default_rng(self.seed)
        points = rng.normal(size=(n, 3))
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        return [radius * p for p in points]

    def to_dict(self) -> dict:
        return {'mode': 'sphere_random', 'seed': self.seed}


@dataclass(frozen=True)
class SphericalSpiral:
    """
    Deterministic path from the north to the south pole: s_i = (i + 0.5) / n,
    latitude asin(1 - 2 s_i), azimuth 2 pi turns s_i.
    """
    turns: float = DEFAULT_SPIRAL_TURNS

    def eyes(self, n: int, radius: float) -> list[np.ndarray]:
        eyes = []
        for i in range(n):
            s = (i + 0.5) / n
            eyes.append(eye_on_sphere(radius, 2.0 * math.pi * self.turns * s, math.asin(1.0 - 2.0 * s)))
        return eyes

    def to_dict(self) -> dict:
        return {'mode': 'spherical_spiral', 'turns': self.turns}


ViewMode = SphereRandom | SphericalSpiral


def generate_views(spec: SceneSpec, n: int, radius: float, mode: ViewMode,
                   K: Intrinsics | None = None, instance_id: str = 'instance_000') -> MultiViewDataset:
    """
    Render n posed views of one scene, every camera on the sphere of `radius` aimed at the origin.
    :param spec: scene
    :param n: number of views
    :param radius: camera distance from the origin
    :param mode: SphereRandom (train) or SphericalSpiral (test)
    :param K: intrinsics, a square DEFAULT_IMAGE_SIZE camera when omitted
    :return: single-instance MultiViewDataset
    """
    if n < 1: raise ValueError(ErrorMessages.BAD_VIEW_COUNT)
    if not radius > 0: raise ValueError(ErrorMessages.BAD_RADIUS)
    if not isinstance(mode, (SphereRandom, SphericalSpiral)): raise ValueError(
        ErrorMessages.UNKNOWN_MODE.format(mode=mode))
    K = K or Intrinsics.square(DEFAULT_IMAGE_SIZE)
    views = []
    for eye in mode.eyes(n, radius):
        pose = look_at_origin(eye)
        views.append(View(cast(spec, pose, K), pose))
    meta = {'view_mode': mode.to_dict(), 'scene': spec.to_dict(), 'n': n}
    return MultiViewDataset([InstanceViews(instance_id, views)], K, float(radius), meta)


def generate_instances(specs: list[SceneSpec], n: int, radius: float, mode: ViewMode,
                       K: Intrinsics | None = None) -> MultiViewDataset:
    """Views of several scenes; SphereRandom seeds are offset per instance so paths differ."""
    K = K or Intrinsics.square(DEFAULT_IMAGE_SIZE)
    instances = []
    for index, spec in enumerate(specs):
        instance_mode = replace(mode, seed=mode.seed + index) if isinstance(mode, SphereRandom) else mode
        instances.extend(generate_views(spec, n, radius, instance_mode, K, f"instance_{index:03d}").instances)
    meta = {'view_mode': mode.to_dict(), 'scenes': [spec.to_dict() for spec in specs], 'n': n}
    return MultiViewDataset(instances, K, float(radius), meta)
