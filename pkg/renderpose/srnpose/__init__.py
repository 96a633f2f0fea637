"""
Camera pose estimation by inverting a learned neural scene renderer.

The renderer is trained on posed views of object instances; a frozen renderer is then
driven by gradient descent over the six pose parameters until its output matches a
query image.
"""
from srnpose.errors import (
    CheckpointError,
    ConfigError,
    DatasetFormatError,
    NonFiniteError,
    PoseEstimationError,
    SrnPoseError,
)
from srnpose.geometry import Intrinsics, Pose6DoF, look_at, matrix_to_pose, pose_errors, pose_to_matrix
from srnpose.renderer import SigmaSrnConfig, SigmaSrnModel, render, render_image, train
from srnpose.poser import Fixed24, LossKind, Neighbor4, PoseEstimate, estimate_pose, evaluate, refine
from srnpose.generalize import AdaptationResult, estimate_pose_twoshot, finetune_embedding
from srnpose.data.checkpoint import load_checkpoint, save_checkpoint

__version__ = '0.1.0'
