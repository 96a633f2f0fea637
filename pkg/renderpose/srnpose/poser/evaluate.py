"""
Pose-estimation sweeps over a test set: per-query errors, aggregate statistics, per-step error
curves and trajectory dumps.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from srnpose.constants.constants import (
    CURVES_FILE,
    DEFAULT_LANE_BATCH,
    DEFAULT_NEIGHBOR_OFFSET_DEG,
    DEFAULT_POSE_LR,
    DEFAULT_POSE_STEPS,
    DEFAULT_RADIUS,
    DEFAULT_SEED,
    QUERIES_FILE,
    SUMMARY_FILE,
    TRAJECTORY_COLUMNS,
)
from srnpose.constants.messages import RunMessages
from srnpose.data.dataset_io import MultiViewDataset
from srnpose.errors import PoseEstimationError
from srnpose.geometry import Intrinsics, Pose6DoF, matrix_to_pose, pose_errors
from srnpose.poser.init_poses import Fixed24, Neighbor4, perturbed_reference
from srnpose.poser.losses import LossKind
from srnpose.poser.refine import PoseEstimate, estimate_pose
from srnpose.renderer.model import SigmaSrnModel

logger = logging.getLogger(__name__)

TRAJECTORY_DIR = 'trajectories'


@dataclass(frozen=True)
class QueryCase:
    image: np.ndarray
    ground_truth: Pose6DoF
    index: int


@dataclass
class QueryOutcome:
    query: int
    case: QueryCase
    estimate: PoseEstimate | None
    e_rot: float = float('nan')
    e_tra: float = float('nan')
    error: str = ''

    @property
    def failed(self) -> bool:
        return self.estimate is None


@dataclass
class EvaluationResult:
    strategy: str
    loss: str
    outcomes: list[QueryOutcome] = field(default_factory=list)

    def queries(self) -> pd.DataFrame:
        """One row per query: winning lane, its final loss and the pose errors."""
        return pd.DataFrame([{
            'query': o.query, 'instance': o.case.index, 'strategy': self.strategy, 'loss_kind': self.loss,
            'lane': o.estimate.winner if o.estimate else -1,
            'final_loss': o.estimate.final_loss if o.estimate else float('nan'),
            'e_rot_deg': o.e_rot, 'e_tra': o.e_tra, 'failed': o.failed, 'error': o.error,
        } for o in self.outcomes])

    def summary(self) -> dict:
        """Mean, population std and median of both errors over the successful queries."""
        frame = self.queries()
        ok = frame[~frame['failed']] if len(frame) else frame
        row = {'strategy': self.strategy, 'loss_kind': self.loss, 'queries': len(frame), 'failed': len(frame) - len(ok)}
        for column in ('e_rot_deg', 'e_tra'):
            values = ok[column].to_numpy(dtype=np.float64) if len(ok) else np.array([])
            row[f'{column}_mean'] = float(np.mean(values)) if values.size else float('nan')
            row[f'{column}_std'] = float(np.std(values)) if values.size else float('nan')
            row[f'{column}_median'] = float(np.median(values)) if values.size else float('nan')
        return row

    def trajectory_frame(self, query: int) -> pd.DataFrame:
        outcome = self.outcomes[query]
        rows = [r for t in outcome.estimate.trajectories for r in t.rows()] if outcome.estimate else []
        return pd.DataFrame(rows, columns=list(TRAJECTORY_COLUMNS))

    def curves(self) -> pd.DataFrame:
        """Per-step mean and std of the winning lanes' errors and loss across queries."""
        return error_curves([o.estimate.best.rows() for o in self.outcomes if o.estimate])


def error_curves(winning_rows: list[list[dict]]) -> pd.DataFrame:
    columns = ['step', 'e_rot_mean', 'e_rot_std', 'e_tra_mean', 'e_tra_std', 'loss_mean', 'loss_std']
    if not winning_rows:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([row for rows in winning_rows for row in rows])
    grouped = frame.groupby('step')
    curves = pd.DataFrame({
        'e_rot_mean': grouped['e_rot_deg'].mean(),
        'e_rot_std': grouped['e_rot_deg'].std(ddof=0),
        'e_tra_mean': grouped['e_tra'].mean(),
        'e_tra_std': grouped['e_tra'].std(ddof=0),
        'loss_mean': grouped['loss'].mean(),
        'loss_std': grouped['loss'].std(ddof=0),
    }).reset_index()
    return curves[columns]


def query_cases(dataset: MultiViewDataset, per_instance: int | None = None,
                instances: int | None = None) -> list[QueryCase]:
    """Test queries from a dataset, optionally clipped to the first views and instances."""
    cases = []
    for index, instance in enumerate(dataset.instances[:instances]):
        for view in instance.views[:per_instance]:
            cases.append(QueryCase(view.image, matrix_to_pose(view.pose), index))
    return cases


def _strategy_for(name: str, case: QueryCase, query: int, radius: float, offset_deg: float, seed: int):
    if name == Neighbor4.name:
        rng = np.random.default_rng((seed, query))
        return Neighbor4(perturbed_reference(case.ground_truth, offset_deg, rng), offset_deg)
    return Fixed24(radius)


def evaluate(model: SigmaSrnModel, cases: list[QueryCase], K: Intrinsics, strategy: str = Fixed24.name,
             kind: LossKind = LossKind.mae(), steps: int = DEFAULT_POSE_STEPS, lr: float = DEFAULT_POSE_LR,
             batch: int = DEFAULT_LANE_BATCH, radius: float = DEFAULT_RADIUS,
             offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG, seed: int = DEFAULT_SEED,
             workers: int = 1, progress: bool = False, index_override: int | None = None) -> EvaluationResult:
    """
    Estimate the pose of every query and score the winners against ground truth.
    For neighbor4 each query's reference is its ground truth moved offset_deg in a direction
    drawn from (seed, query number), so results do not depend on the worker count.
    A query whose estimation fails is recorded as failed and the sweep continues.
    :param index_override: render every query with this instance column (two-shot evaluation)
    """
    def run(query: int) -> QueryOutcome:
        case = cases[query]
        index = case.index if index_override is None else index_override
        initial = _strategy_for(strategy, case, query, radius, offset_deg, seed)
        try:
            estimate = estimate_pose(case.image, K, index, model, initial, steps, kind, batch, lr,
                                     ground_truth=case.ground_truth)
        except PoseEstimationError as e:
            logger.warning(f"query {query} failed: {e}")
            return QueryOutcome(query, case, None, error=str(e))
        e_rot, e_tra = pose_errors(estimate.pose, case.ground_truth)
        logger.info(RunMessages.QUERY_DONE.format(query=query, e_rot=e_rot, e_tra=e_tra))
        return QueryOutcome(query, case, estimate, e_rot, e_tra)

    result = EvaluationResult(strategy, kind.name)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = pool.map(run, range(len(cases)))
        result.outcomes = list(tqdm(outcomes, total=len(cases), desc=f"{strategy}/{kind}", disable=not progress))
    return result


def write_evaluation(result: EvaluationResult, out_dir, extra: dict | None = None) -> Path:
    """
    Write queries.csv, summary.csv, curves.csv and one trajectory CSV per query.
    :param extra: columns added to the summary row (e.g. config digest and seed)
    """
    out_dir = Path(out_dir)
    (out_dir / TRAJECTORY_DIR).mkdir(parents=True, exist_ok=True)
    result.queries().to_csv(out_dir / QUERIES_FILE, index=False)
    pd.DataFrame([{**result.summary(), **(extra or {})}]).to_csv(out_dir / SUMMARY_FILE, index=False)
    result.curves().to_csv(out_dir / CURVES_FILE, index=False)
    for outcome in result.outcomes:
        result.trajectory_frame(outcome.query).to_csv(
            out_dir / TRAJECTORY_DIR / f"query_{outcome.query:03d}.csv", index=False)
    return out_dir
