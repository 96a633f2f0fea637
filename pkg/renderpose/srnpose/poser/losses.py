"""Differentiable image losses used to compare a render with the query image."""
from dataclasses import dataclass

import numpy as np

from srnpose import diffcore as dc
from srnpose.constants.constants import GMSD_CONTRAST, LOSS_KINDS, LUMINANCE_WEIGHTS
from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore import Tensor

PREWITT_X = np.array([[1.0, 0.0, -1.0],
                      [1.0, 0.0, -1.0],
                      [1.0, 0.0, -1.0]]) / 3.0
PREWITT_Y = PREWITT_X.T.copy()


@dataclass(frozen=True)
class LossKind:
    name: str
    contrast: float = GMSD_CONTRAST

    def __post_init__(self) -> None:
        if self.name not in LOSS_KINDS: raise ValueError(
            ErrorMessages.UNKNOWN_LOSS.format(kind=self.name, choices=LOSS_KINDS))
        if not self.contrast > 0: raise ValueError(ErrorMessages.BAD_CONTRAST)

    @classmethod
    def mae(cls) -> 'LossKind':
        return cls('mae')

    @classmethod
    def mse(cls) -> 'LossKind':
        return cls('mse')

    @classmethod
    def gmsd(cls, contrast: float = GMSD_CONTRAST) -> 'LossKind':
        return cls('gmsd', contrast)

    def __str__(self) -> str:
        return self.name


def luminance(image: Tensor) -> Tensor:
    """(H, W, 3) -> (H, W)."""
    channels = [dc.scale(image[:, :, c], w) for c, w in enumerate(LUMINANCE_WEIGHTS)]
    return channels[0] + channels[1] + channels[2]


def gradient_magnitude_sq(gray: Tensor) -> Tensor:
    """Squared Prewitt gradient magnitude on interior pixels: (H, W) -> (H-2, W-2)."""
    height, width = gray.shape
    kernels = dc.as_tensor(np.stack([PREWITT_X, PREWITT_Y])[:, None, :, :])
    grads = dc.conv2d(dc.reshape(gray, (1, 1, height, width)), kernels)
    gx = grads[0, 0, 1:height - 1, 1:width - 1]
    gy = grads[0, 1, 1:height - 1, 1:width - 1]
    return dc.square(gx) + dc.square(gy)


def gmsd(pred: Tensor, target: Tensor, contrast: float = GMSD_CONTRAST) -> Tensor:
    """
    Gradient magnitude similarity deviation: population standard deviation of
    (2 g1 g2 + c) / (g1^2 + g2^2 + c) over interior pixels.
    """
    height, width = pred.shape[:2]
    if min(height, width) < 3: raise ValueError(ErrorMessages.GMSD_TOO_SMALL.format(height=height, width=width))
    m1 = gradient_magnitude_sq(luminance(pred))
    m2 = gradient_magnitude_sq(luminance(target))
    numerator = dc.shift(dc.scale(dc.sqrt(m1) * dc.sqrt(m2), 2.0), contrast)
    similarity = numerator / dc.shift(m1 + m2, contrast)
    centred = similarity - dc.expand(dc.mean(similarity, keepdims=True), similarity.shape)
    return dc.sqrt(dc.mean(dc.square(centred)))


def image_loss(pred, target, kind: LossKind) -> Tensor:
    """
    Scalar dissimilarity between two (H, W, 3) images.
    :param pred: rendered image (Tensor), differentiable
    :param target: query image (Tensor or array)
    :param kind: LossKind
    :raises ValueError: if the shapes differ
    """
    pred, target = dc.as_tensor(pred), dc.as_tensor(target)
    if pred.shape != target.shape: raise ValueError(
        ErrorMessages.IMAGE_SHAPES.format(left=pred.shape, right=target.shape))
    match kind.name:
        case 'mae':
            return dc.mean(dc.abs(pred - target))
        case 'mse':
            return dc.mean(dc.square(pred - target))
        case 'gmsd':
            return gmsd(pred, target, kind.contrast)
    raise ValueError(ErrorMessages.UNKNOWN_LOSS.format(kind=kind.name, choices=LOSS_KINDS))
