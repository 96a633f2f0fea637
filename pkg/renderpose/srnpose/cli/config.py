"""
Run configuration: one TOML file of dotted keys plus `--set key=value` overrides, merged over
the section dataclasses below with OmegaConf.

    seed = 0
    model.march_steps = 10
    training.epochs = 8
    estimation.strategy = "neighbor4"
"""
import hashlib
import json
import os
import tomllib
import typing
from dataclasses import asdict, dataclass, field, fields, make_dataclass
from functools import partial
from pathlib import Path
from typing import List

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import ConfigAttributeError, ConfigKeyError, ValidationError

from srnpose.constants.constants import (
    DEFAULT_ADAPT_LR,
    DEFAULT_FOCAL_RATIO,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_INSTANCES,
    DEFAULT_LANE_BATCH,
    DEFAULT_LATENT_WEIGHT,
    DEFAULT_NEIGHBOR_OFFSET_DEG,
    DEFAULT_POSE_LR,
    DEFAULT_POSE_STEPS,
    DEFAULT_PRIMITIVES,
    DEFAULT_RADIUS,
    DEFAULT_SEED,
    DEFAULT_SHOTS,
    DEFAULT_SPIRAL_TURNS,
    DEFAULT_TEST_VIEWS,
    DEFAULT_TRAIN_BATCH,
    DEFAULT_TRAIN_EPOCHS,
    DEFAULT_TRAIN_LR,
    DEFAULT_TRAIN_VIEWS,
    EVAL_INSTANCES,
    EVAL_QUERIES_PER_INSTANCE,
    GMSD_CONTRAST,
    LOSS_KINDS,
    STRATEGIES,
)
from srnpose.constants.messages import ErrorMessages
from srnpose.errors import ConfigError
from srnpose.renderer.config import SigmaSrnConfig


def _workers() -> int:
    return int(os.getenv("SRNPOSE_WORKERS", "1"))


@dataclass
class TrainingConfig:
    epochs: int = DEFAULT_TRAIN_EPOCHS
    lr: float = DEFAULT_TRAIN_LR
    batch: int = DEFAULT_TRAIN_BATCH
    latent_weight: float = DEFAULT_LATENT_WEIGHT
    max_steps: int = 0

    def validate(self) -> None:
        if self.epochs < 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='training.epochs', reason='must be >= 0'))
        if self.batch < 1: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='training.batch', reason='must be >= 1'))
        if self.lr < 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='training.lr', reason='must be >= 0'))
        if self.latent_weight < 0: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='training.latent_weight', reason='must be >= 0'))
        if self.max_steps < 0: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='training.max_steps', reason='must be >= 0 (0 = no limit)'))


@dataclass
class EstimationConfig:
    strategy: str = 'fixed24'
    loss: str = 'mae'
    steps: int = DEFAULT_POSE_STEPS
    lr: float = DEFAULT_POSE_LR
    batch: int = DEFAULT_LANE_BATCH
    offset_deg: float = DEFAULT_NEIGHBOR_OFFSET_DEG
    contrast: float = GMSD_CONTRAST
    workers: int = field(default_factory=_workers)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES: raise ConfigError(
            ErrorMessages.UNKNOWN_STRATEGY.format(strategy=self.strategy, choices=STRATEGIES))
        if self.loss not in LOSS_KINDS: raise ConfigError(
            ErrorMessages.UNKNOWN_LOSS.format(kind=self.loss, choices=LOSS_KINDS))
        if self.steps < 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='estimation.steps', reason='must be >= 0'))
        if self.batch < 1: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='estimation.batch', reason='must be >= 1'))
        if self.lr < 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='estimation.lr', reason='must be >= 0'))
        if not 0 < self.offset_deg < 90: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='estimation.offset_deg', reason='must be in (0, 90)'))
        if not self.contrast > 0: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='estimation.contrast', reason='must be > 0'))
        if self.workers < 1: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='estimation.workers', reason='must be >= 1'))


@dataclass
class EvaluationConfig:
    strategies: List[str] = field(default_factory=lambda: ['fixed24', 'neighbor4'])
    losses: List[str] = field(default_factory=lambda: ['mae'])
    per_instance: int = EVAL_QUERIES_PER_INSTANCE
    instances: int = EVAL_INSTANCES

    def validate(self) -> None:
        for name in self.strategies:
            if name not in STRATEGIES: raise ConfigError(
                ErrorMessages.UNKNOWN_STRATEGY.format(strategy=name, choices=STRATEGIES))
        for name in self.losses:
            if name not in LOSS_KINDS: raise ConfigError(ErrorMessages.UNKNOWN_LOSS.format(kind=name, choices=LOSS_KINDS))
        if not self.strategies or not self.losses: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='evaluation', reason='needs at least one strategy and one loss'))
        if self.per_instance < 1 or self.instances < 1: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='evaluation', reason='query counts must be >= 1'))


@dataclass
class DataConfig:
    train_dir: str = 'data/train'
    test_dir: str = 'data/test'
    novel_obs_dir: str = 'data/novel_obs'
    novel_test_dir: str = 'data/novel_test'
    radius: float = DEFAULT_RADIUS
    image_size: int = DEFAULT_IMAGE_SIZE
    focal_ratio: float = DEFAULT_FOCAL_RATIO
    instances: int = DEFAULT_INSTANCES
    novel_instances: int = 1
    primitives: int = DEFAULT_PRIMITIVES
    train_views: int = DEFAULT_TRAIN_VIEWS
    test_views: int = DEFAULT_TEST_VIEWS
    spiral_turns: float = DEFAULT_SPIRAL_TURNS

    def validate(self) -> None:
        for key in ('train_views', 'test_views', 'instances', 'primitives', 'image_size'):
            if getattr(self, key) < 1: raise ConfigError(ErrorMessages.BAD_VALUE.format(key=f'data.{key}', reason='must be >= 1'))
        if self.novel_instances < 0: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='data.novel_instances', reason='must be >= 0'))
        if not self.radius > 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='data.radius', reason='must be > 0'))
        if not self.focal_ratio > 0: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='data.focal_ratio', reason='must be > 0'))


@dataclass
class AdaptConfig:
    steps: int = -1
    lr: float = DEFAULT_ADAPT_LR
    shots: int = DEFAULT_SHOTS

    def validate(self) -> None:
        if self.steps < -1: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='adapt.steps', reason='must be >= 0, or -1 for the default budget'))
        if self.shots < 1: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='adapt.shots', reason='must be >= 1'))
        if self.lr < 0: raise ConfigError(ErrorMessages.BAD_VALUE.format(key='adapt.lr', reason='must be >= 0'))


SECTIONS = {
    'model': SigmaSrnConfig,
    'training': TrainingConfig,
    'estimation': EstimationConfig,
    'evaluation': EvaluationConfig,
    'data': DataConfig,
    'adapt': AdaptConfig,
}


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    output_dir: str = 'runs/default'
    model: SigmaSrnConfig = field(default_factory=SigmaSrnConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    data: DataConfig = field(default_factory=DataConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)

    def validate(self) -> 'RunConfig':
        for name in SECTIONS:
            section = getattr(self, name)
            if hasattr(section, 'validate'): section.validate()
        if (self.data.image_size, self.data.image_size) != self.model.image_hw: raise ConfigError(
            ErrorMessages.BAD_VALUE.format(key='model.image_hw', reason=f'{self.model.image_hw} does not match '
                                                                        f'data.image_size {self.data.image_size}'))
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data['model'] = self.model.to_dict()
        return data

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; tags every output of a run."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def require_path(self, key: str) -> Path:
        path = Path(lookup(self, key))
        if not path.exists(): raise ConfigError(ErrorMessages.MISSING_PATH.format(key=key, path=path))
        return path


def lookup(config: RunConfig, key: str):
    target = config
    for part in key.split('.'):
        target = getattr(target, part)
    return target



def _schema_of(cls) -> type:
    """Mutable twin of a frozen config dataclass with tuples as lists, for OmegaConf.structured."""
    hints = typing.get_type_hints(cls)
    specs = []
    for f in fields(cls):
        if typing.get_origin(hints[f.name]) is tuple:
            specs.append((f.name, List[int], field(default_factory=partial(list, f.default))))
        else:
            specs.append((f.name, hints[f.name], field(default=f.default)))
    return make_dataclass(f'{cls.__name__}Schema', specs)


ModelSchema = _schema_of(SigmaSrnConfig)


@dataclass
class RunSchema:
    seed: int = DEFAULT_SEED
    output_dir: str = 'runs/default'
    model: ModelSchema = field(default_factory=ModelSchema)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    data: DataConfig = field(default_factory=DataConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)


def _layer(values: dict) -> DictConfig:
    layer = OmegaConf.create()
    for key, value in values.items():
        OmegaConf.update(layer, key, value, merge=True)
    return layer


def parse_override(item: str) -> tuple[str, object]:
    """'key=value' with the value parsed the way OmegaConf parses a dotlist entry."""
    key, sep, raw = item.partition('=')
    key = key.strip()
    if not sep or not key: raise ConfigError(ErrorMessages.BAD_OVERRIDE.format(item=item))
    try:
        value = OmegaConf.to_container(OmegaConf.from_dotlist([f"{key}={raw.strip()}"]))
    except Exception as e:
        raise ConfigError(ErrorMessages.BAD_VALUE.format(key=key, reason=str(e).splitlines()[0]))
    for part in key.split('.'):
        value = value[part]
    return key, value


def build_config(values: dict, overrides=()) -> RunConfig:
    """
    RunConfig from dotted (or nested) keys, with `key=value` overrides merged on top.
    data.image_size also sets model.image_hw unless that is given explicitly.
    :raises ConfigError: on an unknown key or an ill-typed or out-of-range value
    """
    try:
        user = OmegaConf.merge(_layer(values), _layer(dict(parse_override(item) for item in overrides)))
        merged = OmegaConf.merge(OmegaConf.structured(RunSchema), user)
        if OmegaConf.select(user, 'data.image_size') is not None and OmegaConf.select(user, 'model.image_hw') is None:
            merged.model.image_hw = [merged.data.image_size] * 2
        loaded = OmegaConf.to_object(merged)
    except (ConfigKeyError, ConfigAttributeError) as e:
        raise ConfigError(ErrorMessages.UNKNOWN_KEY.format(key=getattr(e, 'full_key', None)))
    except ValidationError as e:
        raise ConfigError(ErrorMessages.BAD_VALUE.format(key=getattr(e, 'full_key', None),
                                                         reason=str(e).splitlines()[0]))
    try:
        model = SigmaSrnConfig.from_dict(asdict(loaded.model))
    except ValueError as e:
        raise ConfigError(ErrorMessages.BAD_VALUE.format(key='model', reason=str(e)))
    return RunConfig(loaded.seed, loaded.output_dir, model, loaded.training, loaded.estimation,
                     loaded.evaluation, loaded.data, loaded.adapt).validate()


def load_config(path=None, overrides=()) -> RunConfig:
    """
    Read a TOML config (optional) and apply `key=value` overrides on top; overrides win.
    :raises ConfigError: before anything else happens, on any unknown key or invalid value
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file(): raise ConfigError(ErrorMessages.MISSING_PATH.format(key='--config', path=path))
        try:
            values = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}")
    return build_config(values, overrides)
