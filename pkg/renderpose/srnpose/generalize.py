"""
Two-shot adaptation: fit the embedding of an unseen instance from a few posed observations
with every other parameter frozen, then estimate poses with it.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from srnpose import diffcore as dc
from srnpose.constants.constants import (
    ADAPT_STEP_FRACTION,
    DEFAULT_ADAPT_LR,
    DEFAULT_LANE_BATCH,
    DEFAULT_POSE_LR,
    DEFAULT_POSE_STEPS,
)
from srnpose.constants.messages import ErrorMessages, RunMessages
from srnpose.data.checkpoint import load_sidecar, save_sidecar
from srnpose.diffcore import AdamState, Tensor, adam_step
from srnpose.errors import AdaptationError, NonFiniteError
from srnpose.geometry import Intrinsics, Pose6DoF, matrix_to_pose
from srnpose.poser.init_poses import InitStrategy
from srnpose.poser.losses import LossKind
from srnpose.poser.refine import PoseEstimate, estimate_pose
from srnpose.renderer.model import EMBEDDING, SigmaSrnModel
from srnpose.renderer.render import render

logger = logging.getLogger(__name__)

EMBEDDING_PARAM = 'embedding'


@dataclass
class AdaptationResult:
    new_embedding: np.ndarray
    instance_handle: int
    fit_loss_history: list[float] = field(default_factory=list)

    def extend(self, model: SigmaSrnModel) -> SigmaSrnModel:
        """The base model with the adapted embedding appended at instance_handle."""
        extended, _ = model.with_embedding(self.new_embedding)
        return extended


def _as_pose(pose) -> Pose6DoF:
    if isinstance(pose, Pose6DoF): return pose
    pose = np.asarray(pose, dtype=np.float64)
    return matrix_to_pose(pose) if pose.shape == (4, 4) else Pose6DoF.from_array(pose)


def default_adapt_steps(base_steps: int) -> int:
    return int(round(ADAPT_STEP_FRACTION * base_steps))


def observation_loss(embedding: Tensor, observations, K: Intrinsics, view) -> Tensor:
    """Mean over observations of the mean squared image error, rendered with `embedding`."""
    total = None
    for image, pose in observations:
        pred = render(pose, K, 0, view, embedding=embedding)
        mse = dc.mean(dc.square(pred - dc.as_tensor(image)))
        total = mse if total is None else total + mse
    return dc.scale(total, 1.0 / len(observations))


def finetune_embedding(model: SigmaSrnModel, observations, K: Intrinsics, steps: int | None = None,
                       lr: float = DEFAULT_ADAPT_LR, base_steps: int = 0,
                       init: np.ndarray | None = None) -> AdaptationResult:
    """
    Learn a new embedding from posed observations, everything else frozen.
    :param model: trained base model; never modified
    :param observations: (image, pose) pairs; pose as Pose6DoF, 6 values or a 4x4 transform
    :param K: intrinsics of the observations
    :param steps: Adam steps; defaults to ADAPT_STEP_FRACTION of base_steps
    :param lr: Adam learning rate
    :param base_steps: optimizer steps the base model was trained for
    :param init: starting embedding, the mean of the trained columns by default
    :return: AdaptationResult; the loss history has one entry per step plus the final evaluation
    :raises AdaptationError: on a non-finite loss or gradient, with the history so far
    """
    observations = [(np.asarray(image, dtype=np.float64), _as_pose(pose)) for image, pose in observations]
    if not observations: raise ValueError(ErrorMessages.NO_OBSERVATIONS)
    steps = default_adapt_steps(base_steps) if steps is None else steps
    if steps < 0: raise ValueError(ErrorMessages.BAD_STEPS)

    values = np.array(model.mean_embedding() if init is None else init, dtype=np.float64).reshape(-1)
    state = AdamState.zeros({EMBEDDING_PARAM: values}, lr)
    view = model.view()
    history: list[float] = []
    for step in range(steps + 1):
        leaf = Tensor(values, requires_grad=True, name=EMBEDDING_PARAM)
        loss = observation_loss(leaf, observations, K, view)
        history.append(loss.item())
        if not math.isfinite(history[-1]):
            dc.current_graph().release()
            raise AdaptationError(ErrorMessages.ADAPT_NON_FINITE.format(step=step), history)
        if step == steps:
            dc.current_graph().release()
            break
        grads = dc.backward(loss)
        try:
            params, state = adam_step({EMBEDDING_PARAM: values}, {EMBEDDING_PARAM: grads[leaf]}, state)
        except NonFiniteError as e:
            raise AdaptationError(str(e), history)
        values = params[EMBEDDING_PARAM]

    result = AdaptationResult(values, model.num_instances, history)
    logger.info(RunMessages.ADAPT_DONE.format(handle=result.instance_handle, start=history[0], end=history[-1]))
    return result


def mean_embedding_baseline(model: SigmaSrnModel) -> AdaptationResult:
    """The adaptation starting point: mean of the trained embedding columns, no fitting."""
    return AdaptationResult(model.mean_embedding(), model.num_instances)


def random_embedding_baseline(model: SigmaSrnModel, rng: np.random.Generator) -> AdaptationResult:
    """An embedding drawn from a normal matching the trained columns' mean and spread."""
    columns = model.params[EMBEDDING]
    spread = float(columns.std()) or 1.0
    return AdaptationResult(rng.normal(columns.mean(axis=1), spread), model.num_instances)


def estimate_pose_twoshot(query, K: Intrinsics, adaptation: AdaptationResult, model: SigmaSrnModel,
                          strategy: InitStrategy, kind: LossKind = LossKind.mae(),
                          steps: int = DEFAULT_POSE_STEPS, batch: int = DEFAULT_LANE_BATCH,
                          lr: float = DEFAULT_POSE_LR, ground_truth: Pose6DoF | None = None) -> PoseEstimate:
    """estimate_pose on the base model extended with the adapted embedding."""
    return estimate_pose(query, K, adaptation.instance_handle, adaptation.extend(model), strategy, steps, kind,
                         batch, lr, ground_truth=ground_truth)


def save_adaptation(adaptation: AdaptationResult, model: SigmaSrnModel, path):
    return save_sidecar(path, model.digest(), adaptation.new_embedding, adaptation.fit_loss_history)


def load_adaptation(path, model: SigmaSrnModel) -> AdaptationResult:
    """:raises CheckpointError: if the sidecar was made for a different base model"""
    embedding, history = load_sidecar(path, model.digest())
    return AdaptationResult(embedding, model.num_instances, history)
