import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore import Tensor
from srnpose.renderer.config import SigmaSrnConfig

logger = logging.getLogger(__name__)

EMBEDDING = 'theta_e'
GROUPS = {
    'theta_e': ('theta_e',),
    'theta_f_hyp': ('hyper.',),
    'theta_g': ('density.',),
    'theta_r': ('lstm.',),
    'theta_h': ('pixgen.',),
}
MARCH_HEAD_SCALE = 1e-2


def _he(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ModelView:
    """Tensors wrapping one model's parameters for a single forward pass."""
    config: SigmaSrnConfig
    tensors: dict[str, Tensor]
    num_instances: int

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]


class SigmaSrnModel:
    """
    Parameter store of the renderer: theta_e (embed_dim x num_instances), the per-layer
    hypernetworks producing theta_f, the density network theta_g, the LSTM ray marcher theta_r
    and the convolutional pixel generator theta_h.

    Parameter arrays are read-only; updates build a new model, so one instance can be shared
    across threads while lanes render from it.
    """

    def __init__(self, config: SigmaSrnConfig, params: dict[str, np.ndarray], num_instances: int) -> None:
        self.config = config
        self.num_instances = int(num_instances)
        self.params: dict[str, np.ndarray] = {}
        for name, value in params.items():
            array = np.array(value, copy=True)
            array.flags.writeable = False
            self.params[name] = array
        self._check_hypernetwork()

    @classmethod
    def initialize(cls, config: SigmaSrnConfig, num_instances: int, seed: int = 0) -> 'SigmaSrnModel':
        """
        Random initial parameters.
        The hypernetwork heads start with small weights and a bias equal to a He-initialised
        layer of f, so every instance starts from a sensible scene network.
        :param config: architecture
        :param num_instances: number of embedding columns
        :param seed: RNG seed
        :return: SigmaSrnModel
        """
        if num_instances < 1: raise ValueError(ErrorMessages.BAD_INSTANCE.format(index=0, count=num_instances))
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {EMBEDDING: rng.normal(0.0, 0.01, size=(config.embed_dim, num_instances))}

        for layer, (fan_in, fan_out) in enumerate(config.scene_layers):
            widths = (config.embed_dim,) + config.hyper_hidden
            for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
                params[f'hyper.{layer}.w{j}'] = _he(rng, a, b)
                params[f'hyper.{layer}.b{j}'] = np.zeros(b)
            head = len(widths) - 1
            target = np.concatenate([_he(rng, fan_in, fan_out).reshape(-1), np.zeros(fan_out)])
            params[f'hyper.{layer}.w{head}'] = rng.normal(0.0, 0.1 / np.sqrt(widths[-1]), size=(widths[-1], target.size))
            params[f'hyper.{layer}.b{head}'] = target

        widths = (3,) + config.density_hidden + (1,)
        for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            params[f'density.w{j}'] = _he(rng, a, b)
            params[f'density.b{j}'] = np.zeros(b)

        h = config.lstm_hidden
        bound = 1.0 / np.sqrt(h)
        params['lstm.wx'] = _uniform(rng, bound, (config.repr_dim, 4 * h))
        params['lstm.wh'] = _uniform(rng, bound, (h, 4 * h))
        params['lstm.b'] = np.zeros(4 * h)
        params['lstm.head_w'] = rng.normal(0.0, MARCH_HEAD_SCALE, size=(h, 3))
        params['lstm.head_b'] = np.zeros(3)

        k, channels = config.pixgen_kernel, config.pixgen_channels
        params['pixgen.w0'] = rng.normal(0.0, np.sqrt(2.0 / (config.repr_dim * k * k)),
                                         size=(channels, config.repr_dim, k, k))
        params['pixgen.b0'] = np.zeros(channels)
        params['pixgen.w1'] = rng.normal(0.0, np.sqrt(1.0 / (channels * k * k)), size=(3, channels, k, k))
        params['pixgen.b1'] = np.zeros(3)
        return cls(config, params, num_instances)

    def _check_hypernetwork(self) -> None:
        emitted = 0
        for layer in range(len(self.config.scene_layers)):
            heads = [name for name in self.params if name.startswith(f'hyper.{layer}.b')]
            head = max(heads, key=lambda name: int(name.rsplit('b', 1)[1]))
            emitted += self.params[head].size
        needed = self.config.scene_param_count
        if emitted != needed: raise ValueError(ErrorMessages.HYPER_COUNT.format(emitted=emitted, needed=needed))

    def view(self, trainable=None) -> ModelView:
        """
        Wrap parameters as Tensors.
        :param trainable: names (or group prefixes) that should require grad; None freezes everything
        """
        trainable = set(trainable or ())
        tensors = {}
        for name, value in self.params.items():
            requires = name in trainable or any(name.startswith(p) for p in trainable if p.endswith('.'))
            tensors[name] = Tensor(value, requires_grad=requires, name=name)
        return ModelView(self.config, tensors, self.num_instances)

    def replace(self, params: dict[str, np.ndarray]) -> 'SigmaSrnModel':
        merged = dict(self.params)
        merged.update(params)
        return SigmaSrnModel(self.config, merged, self.num_instances)

    def with_embedding(self, embedding: np.ndarray) -> tuple['SigmaSrnModel', int]:
        """Append one embedding column; returns the extended model and the new column's index."""
        column = np.asarray(embedding, dtype=np.float64).reshape(-1, 1)
        extended = np.concatenate([self.params[EMBEDDING], column], axis=1)
        merged = dict(self.params)
        merged[EMBEDDING] = extended
        return SigmaSrnModel(self.config, merged, self.num_instances + 1), self.num_instances

    def mean_embedding(self) -> np.ndarray:
        return self.params[EMBEDDING].mean(axis=1)

    def group(self, group: str) -> dict[str, np.ndarray]:
        prefixes = GROUPS[group]
        return {name: value for name, value in self.params.items() if name.startswith(prefixes)}

    def digest(self, exclude=()) -> str:
        """SHA-256 over names, shapes, dtypes and raw bytes of every parameter."""
        sha = hashlib.sha256()
        for name in sorted(self.params):
            if name in exclude or any(name.startswith(p) for p in exclude):
                continue
            value = self.params[name]
            sha.update(name.encode())
            sha.update(str(value.shape).encode())
            sha.update(value.dtype.str.encode())
            sha.update(np.ascontiguousarray(value).tobytes())
        return sha.hexdigest()

    def parameter_count(self) -> int:
        return sum(value.size for value in self.params.values())

    def __str__(self) -> str:
        return f"SigmaSrnModel | instances: {self.num_instances} | parameters: {self.parameter_count()}"
