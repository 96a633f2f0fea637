"""
Pose refinement against a frozen renderer.

Every lane optimizes the six scalars of one Pose6DoF with Adam. Lanes of a batch are rendered
as separate subgraphs of one tape and differentiated together with per_sample_backward; the
model's parameters enter every graph as constants, so each lane's gradient is exactly what a
lane refined on its own would get.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from srnpose import diffcore as dc
from srnpose.constants.constants import DEFAULT_LANE_BATCH, DEFAULT_POSE_LR, DEFAULT_POSE_STEPS
from srnpose.constants.messages import ErrorMessages, RunMessages
from srnpose.diffcore import AdamState, Tensor, adam_step
from srnpose.errors import NonFiniteError, PoseEstimationError
from srnpose.geometry import Intrinsics, Pose6DoF, pose_errors
from srnpose.poser.init_poses import InitStrategy, initial_poses
from srnpose.poser.losses import LossKind, image_loss
from srnpose.renderer.model import SigmaSrnModel
from srnpose.renderer.render import render

logger = logging.getLogger(__name__)

POSE_PARAM = 'pose'


@dataclass(frozen=True)
class TrajectoryStep:
    step: int
    pose: Pose6DoF
    loss: float
    e_rot: float | None = None
    e_tra: float | None = None


@dataclass
class RefinementTrajectory:
    lane: int
    steps: list[TrajectoryStep] = field(default_factory=list)
    failed: bool = False
    failure: str = ''
    clamped: bool = False

    @property
    def final_loss(self) -> float:
        return self.steps[-1].loss if self.steps else math.inf

    @property
    def converged_pose(self) -> Pose6DoF | None:
        return self.steps[-1].pose if self.steps else None

    @property
    def initial_pose(self) -> Pose6DoF | None:
        return self.steps[0].pose if self.steps else None

    @property
    def best_losses(self) -> list[float]:
        """Running minimum of the loss along the trajectory."""
        return list(np.minimum.accumulate([s.loss for s in self.steps])) if self.steps else []

    def rows(self) -> list[dict]:
        best = self.best_losses
        return [{
            'step': s.step, 'lane': self.lane,
            'theta1': s.pose.theta[0], 'theta2': s.pose.theta[1], 'theta3': s.pose.theta[2],
            't1': s.pose.t[0], 't2': s.pose.t[1], 't3': s.pose.t[2],
            'loss': s.loss, 'e_rot_deg': s.e_rot, 'e_tra': s.e_tra, 'best_loss': best[i],
        } for i, s in enumerate(self.steps)]

    def diagnostics(self) -> dict:
        return {'lane': self.lane, 'failed': self.failed, 'failure': self.failure,
                'steps_completed': len(self.steps) - 1, 'final_loss': self.final_loss,
                'initial_pose': self.initial_pose.to_dict() if self.initial_pose else None}


@dataclass
class PoseEstimate:
    pose: Pose6DoF
    winner: int
    trajectories: list[RefinementTrajectory]

    @property
    def final_loss(self) -> float:
        return self.trajectories[self.winner].final_loss

    @property
    def best(self) -> RefinementTrajectory:
        return self.trajectories[self.winner]


class _Lane:
    """Optimizer state of one refinement lane."""

    def __init__(self, lane: int, init: Pose6DoF, lr: float, ground_truth: Pose6DoF | None, clamped: bool) -> None:
        self.values = init.as_array()
        self.optimizer = AdamState.zeros({POSE_PARAM: self.values}, lr)
        self.ground_truth = ground_truth
        self.trajectory = RefinementTrajectory(lane, clamped=clamped)
        self.leaf: Tensor | None = None

    @property
    def active(self) -> bool:
        return not self.trajectory.failed

    def fail(self, reason: str) -> None:
        self.trajectory.failed = True
        self.trajectory.failure = reason
        logger.warning(f"lane {self.trajectory.lane} stopped: {reason}")

    def record(self, step: int, loss: float) -> None:
        pose = Pose6DoF.from_array(self.values)
        e_rot = e_tra = None
        if self.ground_truth is not None:
            e_rot, e_tra = pose_errors(pose, self.ground_truth)
        self.trajectory.steps.append(TrajectoryStep(step, pose, loss, e_rot, e_tra))

    def update(self, grad: np.ndarray) -> None:
        try:
            params, self.optimizer = adam_step({POSE_PARAM: self.values}, {POSE_PARAM: grad}, self.optimizer)
        except NonFiniteError as e:
            self.fail(str(e))
            return
        if not np.all(np.isfinite(params[POSE_PARAM])):
            self.fail(ErrorMessages.NON_FINITE_POSE)
            return
        self.values = params[POSE_PARAM]


def _run_lanes(lanes: list[_Lane], query: Tensor, K: Intrinsics, index: int, model: SigmaSrnModel,
               steps: int, kind: LossKind) -> None:
    """Advance a batch of lanes through `steps` Adam updates, recording steps + 1 evaluations."""
    view = model.view()
    for step in range(steps + 1):
        active = [lane for lane in lanes if lane.active]
        if not active:
            return
        roots = []
        for lane in active:
            lane.leaf = Tensor(lane.values, requires_grad=True, name=f"{POSE_PARAM}{lane.trajectory.lane}")
            roots.append(image_loss(render(lane.leaf, K, index, view), query, kind))
        grads = dc.per_sample_backward(roots, [lane.leaf for lane in active])
        for lane, root, grad in zip(active, roots, grads):
            loss = root.item()
            if not math.isfinite(loss):
                lane.fail(f"non-finite loss at step {step}")
                continue
            lane.record(step, loss)
            if step < steps:
                lane.update(grad[lane.leaf])


def _check_steps(steps: int) -> None:
    if steps < 0: raise ValueError(ErrorMessages.BAD_STEPS)


def refine(init: Pose6DoF, query, K: Intrinsics, index: int, model: SigmaSrnModel,
           steps: int = DEFAULT_POSE_STEPS, lr: float = DEFAULT_POSE_LR, kind: LossKind = LossKind.mae(),
           ground_truth: Pose6DoF | None = None) -> RefinementTrajectory:
    """
    Optimize one pose so the frozen model's render matches the query.
    :param init: starting pose
    :param query: (H, W, 3) image in [0, 1]
    :param K: intrinsics of the query
    :param index: instance column of the model
    :param model: trained model; its parameters are never modified
    :param steps: Adam updates; the trajectory holds steps + 1 entries (fewer if the lane fails)
    :param lr: Adam learning rate
    :param kind: image loss
    :param ground_truth: when given, every step records rotation/translation errors
    :return: RefinementTrajectory; on a non-finite loss or gradient it is truncated and flagged
    """
    _check_steps(steps)
    lane = _Lane(0, init, lr, ground_truth, False)
    _run_lanes([lane], dc.as_tensor(query), K, index, model, steps, kind)
    return lane.trajectory


def estimate_pose(query, K: Intrinsics, index: int, model: SigmaSrnModel, strategy: InitStrategy,
                  steps: int = DEFAULT_POSE_STEPS, kind: LossKind = LossKind.mae(),
                  batch: int = DEFAULT_LANE_BATCH, lr: float = DEFAULT_POSE_LR,
                  ground_truth: Pose6DoF | None = None) -> PoseEstimate:
    """
    Refine every initial pose of `strategy` and keep the lane with the lowest final loss.
    Lanes run in batches of `batch`; ties go to the lower lane index.
    :raises PoseEstimationError: if every lane failed, carrying per-lane diagnostics
    """
    _check_steps(steps)
    if batch < 1: raise ValueError(ErrorMessages.BAD_BATCH)
    query = dc.as_tensor(query)
    inits, clamped = initial_poses(strategy)
    lanes = [_Lane(i, pose, lr, ground_truth, flag) for i, (pose, flag) in enumerate(zip(inits, clamped))]
    for start in range(0, len(lanes), batch):
        chunk = lanes[start:start + batch]
        _run_lanes(chunk, query, K, index, model, steps, kind)
        for lane in chunk:
            logger.debug(RunMessages.LANE_DONE.format(lane=lane.trajectory.lane, loss=lane.trajectory.final_loss,
                                                      steps=len(lane.trajectory.steps) - 1))

    trajectories = [lane.trajectory for lane in lanes]
    finished = [t for t in trajectories if not t.failed and t.steps]
    if not finished: raise PoseEstimationError(
        ErrorMessages.ALL_LANES_FAILED.format(lanes=len(trajectories)), [t.diagnostics() for t in trajectories])
    winner = min(finished, key=lambda t: (t.final_loss, t.lane))
    logger.info(RunMessages.WINNER.format(lane=winner.lane, loss=winner.final_loss))
    return PoseEstimate(winner.converged_pose, winner.lane, trajectories)
