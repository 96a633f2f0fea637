from srnpose.poser.init_poses import (
    Fixed24,
    InitStrategy,
    Neighbor4,
    initial_poses,
    make_strategy,
    perturbed_reference,
    sample_fixed_24,
    sample_neighbor_4,
)
from srnpose.poser.losses import LossKind, image_loss
from srnpose.poser.refine import PoseEstimate, RefinementTrajectory, TrajectoryStep, estimate_pose, refine
from srnpose.poser.evaluate import EvaluationResult, QueryCase, evaluate, query_cases, write_evaluation
