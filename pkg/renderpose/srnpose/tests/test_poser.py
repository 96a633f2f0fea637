import math

import numpy as np
import pandas as pd
import pytest

from srnpose import diffcore as dc
from srnpose.constants.constants import GMSD_CONTRAST, LUMINANCE_WEIGHTS, TRAJECTORY_COLUMNS
from srnpose.errors import PoleClampWarning, PoseEstimationError
from srnpose.geometry import Pose6DoF, eye_on_sphere, look_at_origin, matrix_to_pose, pose_to_matrix, sphere_angles
from srnpose.poser.evaluate import error_curves, evaluate, query_cases, write_evaluation
from srnpose.poser.init_poses import (
    Fixed24,
    Neighbor4,
    initial_poses,
    make_strategy,
    perturbed_reference,
    sample_fixed_24,
    sample_neighbor_4,
)
from srnpose.poser.losses import LossKind, image_loss
from srnpose.poser.refine import estimate_pose, refine
from srnpose.renderer.render import render_image

REFERENCE = matrix_to_pose(look_at_origin(eye_on_sphere(1.3, 0.6, math.radians(10.0))))


def angle_between(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    cosine = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(max(-1.0, min(1.0, cosine))))


def gmsd_reference(pred: np.ndarray, target: np.ndarray, c: float = GMSD_CONTRAST) -> float:
    """Direct per-pixel evaluation of the gradient magnitude similarity deviation."""
    kernel_x = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
    kernel_y = kernel_x.T

    def magnitude(image):
        w = LUMINANCE_WEIGHTS
        gray = w[0] * image[:, :, 0] + w[1] * image[:, :, 1] + w[2] * image[:, :, 2]
        height, width = gray.shape
        out = np.zeros((height - 2, width - 2))
        for v in range(1, height - 1):
            for u in range(1, width - 1):
                window = gray[v - 1:v + 2, u - 1:u + 2]
                out[v - 1, u - 1] = math.sqrt(np.sum(window * kernel_x) ** 2 + np.sum(window * kernel_y) ** 2)
        return out

    g1, g2 = magnitude(pred), magnitude(target)
    similarity = (2.0 * g1 * g2 + c) / (g1 ** 2 + g2 ** 2 + c)
    return float(np.std(similarity))


class TestInitialPoses:

    def test_fixed24_layout(self):
        poses = sample_fixed_24(1.3)
        assert len(poses) == 24
        for index, pose in enumerate(poses):
            radius, azimuth, latitude = sphere_angles(pose.t)
            assert radius == pytest.approx(1.3)
            assert math.degrees(latitude) == pytest.approx((45.0, 0.0, -45.0)[index // 8])
            assert math.degrees(azimuth) % 360.0 == pytest.approx(45.0 * (index % 8), abs=1e-9)

    def test_fixed24_cameras_look_at_origin(self):
        for pose in sample_fixed_24(2.0):
            matrix = look_at_origin(pose.t)
            assert np.allclose(matrix_to_pose(matrix).as_array(), pose.as_array(), atol=1e-12)
            # camera z axis points away from the origin
            rebuilt = np.asarray(pose.t) / np.linalg.norm(pose.t)
            assert np.allclose(matrix[:3, 2], rebuilt)

    def test_neighbor4_offsets(self):
        poses = sample_neighbor_4(REFERENCE, 30.0)
        assert len(poses) == 4
        for pose in poses:
            assert np.linalg.norm(pose.t) == pytest.approx(1.3)
            assert angle_between(pose.t, REFERENCE.t) == pytest.approx(30.0, abs=1e-9)
        above, below, left, right = (sphere_angles(p.t) for p in poses)
        assert math.degrees(above[2]) == pytest.approx(40.0)
        assert math.degrees(below[2]) == pytest.approx(-20.0)
        assert left[1] < 0.6 < right[1]

    def test_fixed24_view_rays_pass_through_origin(self):
        for pose in sample_fixed_24(1.3):
            forward = -pose_to_matrix(pose)[:3, 2]
            assert np.allclose(forward, -np.asarray(pose.t) / 1.3, atol=1e-12)

    def test_neighbor4_on_the_equator(self):
        reference = matrix_to_pose(look_at_origin(eye_on_sphere(2.0, 0.0, 0.0)))
        above, below, left, right = (sphere_angles(p.t) for p in sample_neighbor_4(reference, 30.0))
        for (_, azimuth, latitude), expected in zip((above, below, left, right),
                                                    ((0.0, 30.0), (0.0, -30.0), (-30.0, 0.0), (30.0, 0.0))):
            assert (math.degrees(azimuth), math.degrees(latitude)) == pytest.approx(expected, abs=1e-9)

    def test_neighbor4_clamps_at_the_pole(self):
        reference = matrix_to_pose(look_at_origin(eye_on_sphere(1.3, 0.2, math.radians(80.0))))
        with pytest.warns(PoleClampWarning):
            poses, clamped = initial_poses(Neighbor4(reference, 30.0))
        assert clamped == [True, False, False, False]
        assert math.degrees(sphere_angles(poses[0].t)[2]) == pytest.approx(89.0)

    def test_perturbed_reference_is_offset(self, rng):
        truth = REFERENCE
        moved = perturbed_reference(truth, 30.0, rng)
        assert angle_between(moved.t, truth.t) == pytest.approx(30.0, abs=1e-9)
        assert np.linalg.norm(moved.t) == pytest.approx(1.3)

    def test_strategy_validation(self):
        assert make_strategy('fixed24', 2.0) == Fixed24(2.0)
        with pytest.raises(ValueError, match="needs a reference"):
            make_strategy('neighbor4')
        with pytest.raises(ValueError, match="unknown strategy"):
            make_strategy('grid9')
        with pytest.raises(ValueError, match="offset_deg"):
            Neighbor4(REFERENCE, 95.0)
        with pytest.raises(ValueError, match="radius"):
            Fixed24(0.0)


class TestLosses:

    def test_mae_and_mse(self, rng):
        pred, target = rng.uniform(size=(5, 4, 3)), rng.uniform(size=(5, 4, 3))
        assert image_loss(dc.as_tensor(pred), target, LossKind.mae()).item() == pytest.approx(
            np.mean(np.abs(pred - target)), abs=1e-12)
        assert image_loss(dc.as_tensor(pred), target, LossKind.mse()).item() == pytest.approx(
            np.mean((pred - target) ** 2), abs=1e-12)

    def test_gmsd_matches_reference(self, rng):
        pred, target = rng.uniform(size=(7, 6, 3)), rng.uniform(size=(7, 6, 3))
        value = image_loss(dc.as_tensor(pred), target, LossKind.gmsd()).item()
        assert value == pytest.approx(gmsd_reference(pred, target), abs=1e-12)

    def test_gmsd_of_identical_images_is_zero(self, rng):
        image = rng.uniform(size=(6, 6, 3))
        assert image_loss(dc.as_tensor(image), image, LossKind.gmsd()).item() == pytest.approx(0.0, abs=1e-12)

    def test_gmsd_ignores_a_constant_shift(self, rng):
        pred, target = rng.uniform(size=(6, 6, 3)), rng.uniform(size=(6, 6, 3))
        base = image_loss(dc.as_tensor(pred), target, LossKind.gmsd()).item()
        shifted = image_loss(dc.as_tensor(pred + 0.1), target, LossKind.gmsd()).item()
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_gmsd_is_differentiable(self, rng):
        pred = dc.Tensor(rng.uniform(size=(6, 6, 3)), requires_grad=True)
        grads = dc.backward(image_loss(pred, rng.uniform(size=(6, 6, 3)), LossKind.gmsd()))
        assert np.all(np.isfinite(grads[pred]))

    def test_loss_validation(self):
        with pytest.raises(ValueError, match="unknown loss kind"):
            LossKind('ssim')
        with pytest.raises(ValueError, match="contrast"):
            LossKind.gmsd(0.0)
        with pytest.raises(ValueError, match="shape mismatch"):
            image_loss(dc.as_tensor(np.zeros((4, 4, 3))), np.zeros((4, 5, 3)), LossKind.mae())
        with pytest.raises(ValueError, match="at least 3x3 pixels, got 2x5"):
            image_loss(dc.as_tensor(np.zeros((2, 5, 3))), np.zeros((2, 5, 3)), LossKind.gmsd())


class TestRefine:

    def test_zero_learning_rate_keeps_the_pose(self, model, K):
        query = render_image(REFERENCE, K, 0, model)
        init = sample_fixed_24(1.3)[3]
        trajectory = refine(init, query, K, 0, model, steps=3, lr=0.0)
        assert len(trajectory.steps) == 4
        assert all(np.array_equal(s.pose.as_array(), init.as_array()) for s in trajectory.steps)
        assert len({s.loss for s in trajectory.steps}) == 1

    def test_zero_steps_records_the_initial_loss(self, model, K):
        query = render_image(REFERENCE, K, 0, model)
        trajectory = refine(REFERENCE, query, K, 0, model, steps=0)
        assert len(trajectory.steps) == 1
        assert trajectory.final_loss == 0.0

    def test_ground_truth_is_a_fixed_point(self, model, K):
        query = render_image(REFERENCE, K, 0, model)
        trajectory = refine(REFERENCE, query, K, 0, model, steps=5, ground_truth=REFERENCE)
        assert [s.loss for s in trajectory.steps] == [0.0] * 6
        assert np.array_equal(trajectory.converged_pose.as_array(), REFERENCE.as_array())
        assert trajectory.steps[-1].e_rot == pytest.approx(0.0, abs=1e-5)
        assert trajectory.steps[-1].e_tra == pytest.approx(0.0, abs=1e-12)

    def test_pose_moves_and_best_loss_is_running_minimum(self, model, K):
        query = render_image(REFERENCE, K, 0, model)
        trajectory = refine(sample_neighbor_4(REFERENCE)[2], query, K, 0, model, steps=4, lr=0.05)
        assert not np.array_equal(trajectory.converged_pose.as_array(), trajectory.initial_pose.as_array())
        rows = trajectory.rows()
        assert [row['step'] for row in rows] == list(range(5))
        assert list(rows[0]) == list(TRAJECTORY_COLUMNS)
        assert [row['best_loss'] for row in rows] == list(np.minimum.accumulate([row['loss'] for row in rows]))

    def test_negative_steps(self, model, K):
        with pytest.raises(ValueError, match="steps must be >= 0"):
            refine(REFERENCE, np.zeros((6, 6, 3)), K, 0, model, steps=-1)


class TestEstimatePose:

    def test_winner_is_the_lane_started_at_the_answer(self, model, K):
        truth = sample_fixed_24(1.3)[5]
        query = render_image(truth, K, 0, model)
        result = estimate_pose(query, K, 0, model, Fixed24(1.3), steps=1, batch=8)
        assert result.winner == 5
        assert result.final_loss == 0.0
        assert np.array_equal(result.pose.as_array(), truth.as_array())
        assert len(result.trajectories) == 24

    def test_batched_lanes_equal_sequential_lanes(self, model, K):
        query = render_image(REFERENCE, K, 1, model)
        strategy = Neighbor4(perturbed_reference(REFERENCE, 20.0, np.random.default_rng(0)), 30.0)
        batched = estimate_pose(query, K, 1, model, strategy, steps=3, batch=4, kind=LossKind.mse())
        sequential = estimate_pose(query, K, 1, model, strategy, steps=3, batch=1, kind=LossKind.mse())
        for a, b in zip(batched.trajectories, sequential.trajectories):
            assert [s.loss for s in a.steps] == [s.loss for s in b.steps]
            for sa, sb in zip(a.steps, b.steps):
                assert np.array_equal(sa.pose.as_array(), sb.pose.as_array())
        assert batched.winner == sequential.winner

    def test_model_stays_frozen(self, model, K):
        digest = model.digest()
        query = render_image(REFERENCE, K, 0, model)
        estimate_pose(query, K, 0, model, Neighbor4(REFERENCE), steps=2, kind=LossKind.gmsd())
        assert model.digest() == digest

    def test_all_lanes_failing_raises_with_diagnostics(self, model, K):
        query = np.full((6, 6, 3), np.nan)
        with pytest.raises(PoseEstimationError) as info:
            estimate_pose(query, K, 0, model, Neighbor4(REFERENCE), steps=2)
        assert len(info.value.diagnostics) == 4
        assert all(d['failed'] for d in info.value.diagnostics)

class TestEvaluate:

    @pytest.fixture
    def cases(self, test_set):
        return query_cases(test_set)

    def test_query_cases_clip(self, test_set, train_set):
        assert len(query_cases(test_set)) == 2
        assert len(query_cases(train_set, per_instance=2, instances=1)) == 2

    def test_summary_matches_queries(self, model, K, cases, tmp_path):
        result = evaluate(model, cases, K, 'neighbor4', LossKind.mae(), steps=2, batch=4, radius=1.3)
        frame = result.queries()
        summary = result.summary()
        assert summary['queries'] == 2 and summary['failed'] == 0
        assert summary['e_rot_deg_mean'] == pytest.approx(frame['e_rot_deg'].mean())
        assert summary['e_tra_median'] == pytest.approx(frame['e_tra'].median())
        assert summary['e_rot_deg_std'] == pytest.approx(frame['e_rot_deg'].std(ddof=0))

        out = write_evaluation(result, tmp_path / 'run', {'seed': 0})
        written = pd.read_csv(out / 'queries.csv')
        assert written['e_rot_deg'].mean() == pytest.approx(summary['e_rot_deg_mean'])
        assert pd.read_csv(out / 'summary.csv')['seed'].tolist() == [0]
        dump = pd.read_csv(out / 'trajectories' / 'query_001.csv')
        assert list(dump.columns) == list(TRAJECTORY_COLUMNS)
        assert len(dump) == 4 * 3

    def test_curves_come_from_winning_lanes(self, model, K, cases):
        result = evaluate(model, cases, K, 'fixed24', LossKind.mae(), steps=1, batch=12, radius=1.3)
        curves = result.curves()
        assert curves['step'].tolist() == [0, 1]
        winners = [o.estimate.best.rows() for o in result.outcomes]
        final = [rows[-1]['e_rot_deg'] for rows in winners]
        assert curves['e_rot_mean'].iloc[-1] == pytest.approx(np.mean(final))
        assert curves['e_rot_std'].iloc[-1] == pytest.approx(np.std(final))

    def test_workers_do_not_change_results(self, model, K, cases):
        one = evaluate(model, cases, K, 'neighbor4', steps=1, batch=4, radius=1.3, seed=3, workers=1)
        two = evaluate(model, cases, K, 'neighbor4', steps=1, batch=4, radius=1.3, seed=3, workers=2)
        assert one.queries()['e_rot_deg'].tolist() == two.queries()['e_rot_deg'].tolist()

    def test_failed_query_is_recorded(self, model, K, cases):
        broken = [cases[0], type(cases[1])(np.full_like(cases[1].image, np.nan), cases[1].ground_truth, 0)]
        result = evaluate(model, broken, K, 'neighbor4', steps=1, batch=4, radius=1.3)
        assert result.queries()['failed'].tolist() == [False, True]
        assert result.summary()['failed'] == 1

    def test_error_curves_statistics(self):
        rows = [
            [{'step': 0, 'e_rot_deg': 10.0, 'e_tra': 1.0, 'loss': 0.5}, {'step': 1, 'e_rot_deg': 4.0, 'e_tra': 0.2, 'loss': 0.1}],
            [{'step': 0, 'e_rot_deg': 20.0, 'e_tra': 3.0, 'loss': 0.7}, {'step': 1, 'e_rot_deg': 6.0, 'e_tra': 0.4, 'loss': 0.3}],
        ]
        curves = error_curves(rows)
        assert curves['e_rot_mean'].tolist() == [15.0, 5.0]
        assert curves['e_rot_std'].tolist() == [5.0, 1.0]
        assert curves['e_tra_mean'].iloc[0] == pytest.approx(2.0)
        assert error_curves([]).empty


def test_pose6dof_from_rows_round_trip(model, K):
    query = render_image(REFERENCE, K, 0, model)
    trajectory = refine(REFERENCE, query, K, 0, model, steps=0)
    row = trajectory.rows()[0]
    pose = Pose6DoF((row['theta1'], row['theta2'], row['theta3']), (row['t1'], row['t2'], row['t3']))
    assert pose == REFERENCE
