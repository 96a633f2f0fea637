import math

import numpy as np
import pytest

from srnpose import diffcore as dc
from srnpose.errors import AdaptationError, CheckpointError
from srnpose.generalize import (
    AdaptationResult,
    default_adapt_steps,
    estimate_pose_twoshot,
    finetune_embedding,
    load_adaptation,
    mean_embedding_baseline,
    random_embedding_baseline,
    save_adaptation,
)
from srnpose.geometry import look_at_origin, matrix_to_pose
from srnpose.poser.init_poses import Neighbor4
from srnpose.renderer.model import EMBEDDING, SigmaSrnModel
from srnpose.renderer.render import render_image
from srnpose.tests.helpers import tiny_config


def observations(dataset, count=2):
    return [(view.image, view.pose) for view in dataset.instances[0].views[:count]]


class TestFinetune:

    def test_history_and_frozen_model(self, model, train_set, K):
        digest = model.digest()
        result = finetune_embedding(model, observations(train_set), K, steps=3, lr=0.05)
        assert len(result.fit_loss_history) == 4
        assert all(math.isfinite(loss) for loss in result.fit_loss_history)
        assert result.new_embedding.shape == (model.config.embed_dim,)
        assert result.instance_handle == model.num_instances
        assert model.digest() == digest

    def test_zero_steps_keeps_the_mean(self, model, train_set, K):
        result = finetune_embedding(model, observations(train_set), K, steps=0)
        assert len(result.fit_loss_history) == 1
        assert np.array_equal(result.new_embedding, model.mean_embedding())

    def test_zero_learning_rate_keeps_the_start(self, model, train_set, K):
        start = np.linspace(-0.5, 0.5, model.config.embed_dim)
        result = finetune_embedding(model, observations(train_set), K, steps=2, lr=0.0, init=start)
        assert np.array_equal(result.new_embedding, start)
        assert len(set(result.fit_loss_history)) == 1

    def test_duplicated_observation_matches_single(self, model, train_set, K):
        single = observations(train_set, 1)
        once = finetune_embedding(model, single, K, steps=3, lr=0.05)
        twice = finetune_embedding(model, single * 2, K, steps=3, lr=0.05)
        assert np.allclose(once.fit_loss_history, twice.fit_loss_history, rtol=1e-12, atol=0.0)
        assert np.allclose(once.new_embedding, twice.new_embedding, rtol=1e-12, atol=1e-15)

    def test_pose_formats_are_interchangeable(self, model, train_set, K):
        image, matrix = observations(train_set, 1)[0]
        from_matrix = finetune_embedding(model, [(image, matrix)], K, steps=1)
        from_values = finetune_embedding(model, [(image, matrix_to_pose(matrix).as_array())], K, steps=1)
        assert from_matrix.fit_loss_history == from_values.fit_loss_history

    def test_default_budget(self, model, train_set, K):
        assert default_adapt_steps(1000) == 200
        assert default_adapt_steps(0) == 0
        result = finetune_embedding(model, observations(train_set, 1), K, base_steps=10)
        assert len(result.fit_loss_history) == 3

    def test_needs_observations(self, model, K):
        with pytest.raises(ValueError, match="at least one observation"):
            finetune_embedding(model, [], K, steps=1)

    def test_negative_steps(self, model, train_set, K):
        with pytest.raises(ValueError, match="steps must be >= 0"):
            finetune_embedding(model, observations(train_set), K, steps=-1)

    def test_non_finite_image_raises_with_history(self, model, train_set, K):
        image, pose = observations(train_set, 1)[0]
        with pytest.raises(AdaptationError, match="step 0") as info:
            finetune_embedding(model, [(np.full_like(image, np.nan), pose)], K, steps=2)
        assert len(info.value.history) == 1
        assert len(dc.current_graph()) == 0

    def test_two_observations_halve_the_fit_loss(self, K):
        model = SigmaSrnModel.initialize(tiny_config(hyper_hidden=()), 2, seed=0)
        columns = 3.0 * np.array([[0.9, -0.3], [0.2, 0.7], [-0.4, 0.6], [0.5, -0.2]])
        model = model.replace({EMBEDDING: columns})
        poses = [look_at_origin((1.2, 0.4, 0.5)), look_at_origin((-0.5, -1.1, 0.6))]
        seen = [(render_image(matrix_to_pose(pose), K, 1, model), pose) for pose in poses]
        result = finetune_embedding(model, seen, K, steps=80, lr=0.05)
        assert result.fit_loss_history[-1] <= 0.5 * result.fit_loss_history[0]


class TestBaselines:

    def test_mean_baseline(self, model):
        baseline = mean_embedding_baseline(model)
        assert np.array_equal(baseline.new_embedding, model.params[EMBEDDING].mean(axis=1))
        assert baseline.fit_loss_history == []

    def test_random_baseline_is_seeded(self, model):
        a = random_embedding_baseline(model, np.random.default_rng(3))
        b = random_embedding_baseline(model, np.random.default_rng(3))
        assert a.new_embedding.shape == (model.config.embed_dim,)
        assert np.array_equal(a.new_embedding, b.new_embedding)
        assert not np.array_equal(a.new_embedding, random_embedding_baseline(model, np.random.default_rng(4)).new_embedding)

    def test_extend_appends_a_column(self, model):
        extended = AdaptationResult(np.ones(model.config.embed_dim), model.num_instances).extend(model)
        assert extended.num_instances == model.num_instances + 1
        assert np.array_equal(extended.params[EMBEDDING][:, -1], np.ones(model.config.embed_dim))


class TestSidecar:

    def test_save_and_load(self, model, tmp_path):
        adaptation = AdaptationResult(np.arange(4.0) / 7.0, model.num_instances, [0.5, 0.25])
        path = save_adaptation(adaptation, model, tmp_path / 'adaptation.json')
        loaded = load_adaptation(path, model)
        assert np.array_equal(loaded.new_embedding, adaptation.new_embedding)
        assert loaded.fit_loss_history == [0.5, 0.25]
        assert loaded.instance_handle == model.num_instances

    def test_other_base_model_is_rejected(self, model, config, tmp_path):
        path = save_adaptation(mean_embedding_baseline(model), model, tmp_path / 'adaptation.json')
        other = SigmaSrnModel.initialize(config, 2, seed=9)
        with pytest.raises(CheckpointError, match="adaptation was made for"):
            load_adaptation(path, other)

    def test_missing_sidecar(self, model, tmp_path):
        with pytest.raises(CheckpointError, match="file not found"):
            load_adaptation(tmp_path / 'nothing.json', model)


def test_twoshot_estimate(model, train_set, test_set, K):
    adaptation = finetune_embedding(model, observations(train_set), K, steps=2)
    view = test_set.instances[0].views[0]
    truth = matrix_to_pose(view.pose)
    estimate = estimate_pose_twoshot(view.image, K, adaptation, model, Neighbor4(truth, 20.0), steps=2,
                                     ground_truth=truth)
    assert len(estimate.trajectories) == 4
    assert 0 <= estimate.winner < 4
    assert np.all(np.isfinite(estimate.pose.as_array()))
    assert model.num_instances == 2
