"""
Desk-scale end-to-end experiments on the default-sized renderer. Slow; run with `pytest -m slow`.
"""
import numpy as np
import pytest

from srnpose.data.scene import SphereRandom, SphericalSpiral, generate_instances, random_scene_spec
from srnpose.generalize import finetune_embedding, mean_embedding_baseline
from srnpose.geometry import Intrinsics, matrix_to_pose, pose_errors
from srnpose.poser.evaluate import evaluate, query_cases
from srnpose.poser.losses import LossKind
from srnpose.poser.refine import refine
from srnpose.renderer.config import SigmaSrnConfig
from srnpose.renderer.model import SigmaSrnModel
from srnpose.renderer.render import render_image
from srnpose.renderer.train import train

pytestmark = pytest.mark.slow

RADIUS = 1.3
SIZE = 32
TARGET_MSE = 0.01
MAX_EPOCHS = 300


@pytest.fixture(scope='module')
def trained():
    rng = np.random.default_rng(0)
    K = Intrinsics.square(SIZE)
    spec = random_scene_spec(rng, 2)
    novel = random_scene_spec(rng, 2)
    dataset = generate_instances([spec], 50, RADIUS, SphereRandom(0), K)
    model = SigmaSrnModel.initialize(SigmaSrnConfig(), 1, seed=0)
    state = None
    for _ in range(MAX_EPOCHS):
        result = train(dataset, model, epochs=1, state=state)
        model, state = result.model, result.state
        if result.history[-1] < TARGET_MSE:
            break
    return model, state, K, spec, novel


def test_training_reaches_the_target(trained):
    model, state, K, spec, _ = trained
    test = generate_instances([spec], 5, RADIUS, SphericalSpiral(), K)
    errors = [np.mean((render_image(matrix_to_pose(view.pose), K, 0, model) - view.image) ** 2) for _, view in test.samples()]
    assert np.mean(errors) < 3 * TARGET_MSE


def test_rendered_ground_truth_is_a_fixed_point(trained):
    model, _, K, spec, _ = trained
    view = generate_instances([spec], 1, RADIUS, SphericalSpiral(), K).instances[0].views[0]
    truth = matrix_to_pose(view.pose)
    query = render_image(truth, K, 0, model)
    trajectory = refine(truth, query, K, 0, model, steps=300, ground_truth=truth)
    assert max(s.loss for s in trajectory.steps) < 1e-6
    e_rot, e_tra = pose_errors(trajectory.converged_pose, truth)
    assert e_rot < 0.5 and e_tra < 0.01


def test_neighbor4_recovers_test_poses(trained):
    model, _, K, spec, _ = trained
    cases = query_cases(generate_instances([spec], 20, RADIUS, SphericalSpiral(), K))
    neighbor = evaluate(model, cases, K, 'neighbor4', LossKind.mae(), steps=300, lr=0.1).summary()
    fixed = evaluate(model, cases, K, 'fixed24', LossKind.mae(), steps=300, lr=0.1, radius=RADIUS).summary()
    assert neighbor['e_rot_deg_median'] < 5.0
    assert neighbor['e_tra_median'] < 0.05
    assert neighbor['e_rot_deg_median'] <= fixed['e_rot_deg_median']


def test_two_shot_beats_the_unadapted_embedding(trained):
    model, state, K, _, novel = trained
    observations = generate_instances([novel], 2, RADIUS, SphereRandom(10_000), K).instances[0].views
    adapted = finetune_embedding(model, [(v.image, v.pose) for v in observations], K,
                                 base_steps=state.step_count)
    cases = query_cases(generate_instances([novel], 10, RADIUS, SphericalSpiral(), K))

    def median_rotation(adaptation):
        result = evaluate(adaptation.extend(model), cases, K, 'neighbor4', LossKind.mae(), steps=300, lr=0.1,
                          index_override=adaptation.instance_handle)
        return result.summary()['e_rot_deg_median']

    after = median_rotation(adapted)
    assert after < 20.0
    assert after < median_rotation(mean_embedding_baseline(model))
