"""
Multi-view datasets in memory and on disk.

On-disk layout (one directory per dataset):

    intrinsics.txt              focal cx cy height width
    manifest.json               radius, instance ids, provenance
    <instance_id>/rgb/000000.png
    <instance_id>/pose/000000.txt   16 numbers, row-major camera-to-world
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import imageio.v2 as imageio
import numpy as np

from srnpose.constants.constants import (
    IMAGE_SUFFIX,
    INDEX_WIDTH,
    INTRINSICS_FILE,
    MANIFEST_FILE,
    PIXEL_LEVELS,
    POSE_DIR,
    POSE_FILE_TOLERANCE,
    POSE_SUFFIX,
    RGB_DIR,
)
from srnpose.constants.messages import ErrorMessages, RunMessages
from srnpose.errors import DatasetFormatError
from srnpose.geometry import Intrinsics, is_rigid

logger = logging.getLogger(__name__)


@dataclass
class View:
    image: np.ndarray
    pose: np.ndarray


@dataclass
class InstanceViews:
    instance_id: str
    views: list[View] = field(default_factory=list)


@dataclass
class MultiViewDataset:
    """Posed images of one or more instances sharing a single pinhole camera."""
    instances: list[InstanceViews]
    intrinsics: Intrinsics
    radius: float
    meta: dict = field(default_factory=dict)

    @property
    def view_count(self) -> int:
        return sum(len(instance.views) for instance in self.instances)

    def samples(self) -> list[tuple[int, View]]:
        """Every (instance index, view) pair in a fixed order."""
        return [(index, view) for index, instance in enumerate(self.instances) for view in instance.views]

    def subset(self, instance_index: int, view_indices) -> 'MultiViewDataset':
        instance = self.instances[instance_index]
        views = [instance.views[i] for i in view_indices]
        return MultiViewDataset([InstanceViews(instance.instance_id, views)], self.intrinsics, self.radius,
                                dict(self.meta))


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap [0, 1] values to multiples of 1/255 so 8-bit storage is lossless."""
    return np.round(np.clip(image, 0.0, 1.0) * PIXEL_LEVELS) / PIXEL_LEVELS


def _index_name(index: int, suffix: str) -> str:
    return f"{index:0{INDEX_WIDTH}d}{suffix}"


def _numbers(path: Path) -> list[float]:
    values = []
    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        for token in line.split():
            try:
                values.append(float(token))
            except ValueError:
                raise DatasetFormatError(ErrorMessages.BAD_NUMBER.format(path=path, line=line_number, token=token))
    return values


def read_intrinsics(path: Path) -> Intrinsics:
    if not path.is_file(): raise DatasetFormatError(ErrorMessages.MISSING_FILE.format(path=path))
    values = _numbers(path)
    if len(values) != 5: raise DatasetFormatError(ErrorMessages.BAD_INTRINSICS.format(path=path, count=len(values)))
    f, cx, cy, height, width = values
    try:
        return Intrinsics(f, cx, cy, int(height), int(width))
    except ValueError as e:
        raise DatasetFormatError(f"{path}: {e}")


def write_intrinsics(K: Intrinsics, path: Path) -> None:
    path.write_text(f"{K.f!r} {K.cx!r} {K.cy!r} {K.height} {K.width}\n")


def read_pose(path: Path, view: int) -> np.ndarray:
    if not path.is_file(): raise DatasetFormatError(ErrorMessages.MISSING_FILE.format(path=path))
    values = _numbers(path)
    if len(values) != 16: raise DatasetFormatError(
        ErrorMessages.BAD_POSE_FILE.format(path=path, view=view, count=len(values)))
    pose = np.array(values, dtype=np.float64).reshape(4, 4)
    if not is_rigid(pose, POSE_FILE_TOLERANCE): raise DatasetFormatError(
        ErrorMessages.NOT_RIGID.format(path=path, view=view))
    return pose


def write_pose(pose: np.ndarray, path: Path) -> None:
    rows = np.asarray(pose, dtype=np.float64).reshape(4, 4)
    path.write_text("".join(" ".join(repr(float(v)) for v in row) + "\n" for row in rows))


def read_image(path: Path, K: Intrinsics) -> np.ndarray:
    if not path.is_file(): raise DatasetFormatError(ErrorMessages.MISSING_FILE.format(path=path))
    raw = np.asarray(imageio.imread(path))
    expected = (K.height, K.width, 3)
    if raw.ndim == 3 and raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape != expected: raise DatasetFormatError(
        ErrorMessages.BAD_IMAGE.format(path=path, shape=raw.shape, expected=expected))
    return raw.astype(np.float64) / PIXEL_LEVELS


def write_image(image: np.ndarray, path: Path) -> None:
    imageio.imwrite(path, np.round(np.clip(image, 0.0, 1.0) * PIXEL_LEVELS).astype(np.uint8))


def save_dataset(dataset: MultiViewDataset, path) -> Path:
    """
    Write a dataset in the directory layout above. Images are stored as 8-bit PNGs; poses and
    intrinsics are written with full float repr, so they load back bit-exact.
    :param dataset: MultiViewDataset
    :param path: target directory (created if needed)
    :return: the directory
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_intrinsics(dataset.intrinsics, root / INTRINSICS_FILE)
    for instance in dataset.instances:
        rgb_dir = root / instance.instance_id / RGB_DIR
        pose_dir = root / instance.instance_id / POSE_DIR
        rgb_dir.mkdir(parents=True, exist_ok=True)
        pose_dir.mkdir(parents=True, exist_ok=True)
        for index, view in enumerate(instance.views):
            write_image(view.image, rgb_dir / _index_name(index, IMAGE_SUFFIX))
            write_pose(view.pose, pose_dir / _index_name(index, POSE_SUFFIX))
    manifest = {
        'radius': dataset.radius,
        'instances': [instance.instance_id for instance in dataset.instances],
        'views': {instance.instance_id: len(instance.views) for instance in dataset.instances},
        'meta': dataset.meta,
    }
    (root / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.info(RunMessages.DATASET_WRITTEN.format(views=dataset.view_count, instances=len(dataset.instances),
                                                   path=root))
    return root


def load_dataset(path) -> MultiViewDataset:
    """
    Read a dataset directory.
    Instances come from the manifest when present, otherwise from every sub-directory holding
    an rgb/ folder, in sorted order.
    :raises DatasetFormatError: naming the offending file (and line or view) on malformed input
    """
    root = Path(path)
    if not root.is_dir(): raise DatasetFormatError(ErrorMessages.MISSING_FILE.format(path=root))
    K = read_intrinsics(root / INTRINSICS_FILE)
    manifest_path = root / MANIFEST_FILE
    manifest = {}
    if manifest_path.is_file():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{manifest_path}: line {e.lineno}: {e.msg}")

    ids = manifest.get('instances') or sorted(p.name for p in root.iterdir() if (p / RGB_DIR).is_dir())
    if not ids: raise DatasetFormatError(ErrorMessages.NO_INSTANCES.format(path=root))

    instances = []
    for instance_id in ids:
        rgb_dir = root / instance_id / RGB_DIR
        pose_dir = root / instance_id / POSE_DIR
        if not rgb_dir.is_dir(): raise DatasetFormatError(ErrorMessages.MISSING_FILE.format(path=rgb_dir))
        views = []
        for index, image_path in enumerate(sorted(rgb_dir.glob(f"*{IMAGE_SUFFIX}"))):
            pose = read_pose(pose_dir / (image_path.stem + POSE_SUFFIX), index)
            views.append(View(read_image(image_path, K), pose))
        instances.append(InstanceViews(instance_id, views))

    radius = manifest.get('radius')
    if radius is None:
        eyes = [view.pose[:3, 3] for instance in instances for view in instance.views]
        radius = float(np.mean([np.linalg.norm(eye) for eye in eyes])) if eyes else 0.0
    return MultiViewDataset(instances, K, float(radius), manifest.get('meta', {}))
