import numpy as np
import pytest

from srnpose.data.scene import Box, SceneSpec, Sphere, SphereRandom, SphericalSpiral, generate_instances
from srnpose.geometry import Intrinsics
from srnpose.renderer.config import SigmaSrnConfig
from srnpose.renderer.model import SigmaSrnModel
from srnpose.tests.helpers import TINY_SIZE, TOY_RADIUS, tiny_config


@pytest.fixture
def config() -> SigmaSrnConfig:
    return tiny_config()


@pytest.fixture
def K() -> Intrinsics:
    return Intrinsics.square(TINY_SIZE)


@pytest.fixture
def model(config) -> SigmaSrnModel:
    return SigmaSrnModel.initialize(config, 2, seed=0)


@pytest.fixture
def toy_spec() -> SceneSpec:
    return SceneSpec((
        Sphere((0.1, 0.0, 0.0), 0.25, (0.8, 0.2, 0.2)),
        Box((-0.15, 0.05, 0.0), (0.3, 0.3, 0.3), (0.1, 0.3, 0.9)),
    )).normalized()


@pytest.fixture
def train_set(toy_spec, K):
    return generate_instances([toy_spec, toy_spec], 3, TOY_RADIUS, SphereRandom(0), K)


@pytest.fixture
def test_set(toy_spec, K):
    return generate_instances([toy_spec], 2, TOY_RADIUS, SphericalSpiral(), K)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
