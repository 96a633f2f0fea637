from dataclasses import asdict, dataclass, field

from srnpose.constants.constants import (
    DEFAULT_DENSITY_HIDDEN,
    DEFAULT_EMBED_DIM,
    DEFAULT_HYPER_HIDDEN,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_LSTM_HIDDEN,
    DEFAULT_MARCH_STEPS,
    DEFAULT_NEAR_PLANE_OFFSET,
    DEFAULT_PIXGEN_CHANNELS,
    DEFAULT_PIXGEN_KERNEL,
    DEFAULT_RAY_JITTER,
    DEFAULT_REPR_DIM,
    DEFAULT_SCENE_NET_SHAPE,
)
from srnpose.constants.messages import ErrorMessages


@dataclass(frozen=True)
class SigmaSrnConfig:
    """
    Architecture hyperparameters of the renderer.
    scene_net_shape lists the hidden widths of the scene network f (its input is a 3D point
    and its output has repr_dim entries); hyper_hidden and density_hidden likewise list hidden
    widths of the per-layer hypernetworks and of the density network g.
    """
    embed_dim: int = DEFAULT_EMBED_DIM
    repr_dim: int = DEFAULT_REPR_DIM
    march_steps: int = DEFAULT_MARCH_STEPS
    hyper_hidden: tuple[int, ...] = DEFAULT_HYPER_HIDDEN
    scene_net_shape: tuple[int, ...] = DEFAULT_SCENE_NET_SHAPE
    density_hidden: tuple[int, ...] = DEFAULT_DENSITY_HIDDEN
    lstm_hidden: int = DEFAULT_LSTM_HIDDEN
    pixgen_channels: int = DEFAULT_PIXGEN_CHANNELS
    pixgen_kernel: int = DEFAULT_PIXGEN_KERNEL
    near_plane_offset: float = DEFAULT_NEAR_PLANE_OFFSET
    ray_jitter: float = DEFAULT_RAY_JITTER
    normalize_weights: bool = False
    image_hw: tuple[int, int] = field(default=(DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE))

    def __post_init__(self) -> None:
        for name in ('hyper_hidden', 'scene_net_shape', 'density_hidden', 'image_hw'):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.march_steps < 1: raise ValueError(ErrorMessages.BAD_MARCH_STEPS)
        for name in ('embed_dim', 'repr_dim', 'lstm_hidden', 'pixgen_channels'):
            if getattr(self, name) < 1: raise ValueError(ErrorMessages.BAD_WIDTH.format(field=name))
        for name in ('hyper_hidden', 'scene_net_shape', 'density_hidden', 'image_hw'):
            if any(v < 1 for v in getattr(self, name)): raise ValueError(ErrorMessages.BAD_WIDTH.format(field=name))
        if len(self.image_hw) != 2: raise ValueError(ErrorMessages.BAD_WIDTH.format(field='image_hw'))
        if self.pixgen_kernel < 1 or self.pixgen_kernel % 2 != 1: raise ValueError(ErrorMessages.BAD_KERNEL_SIZE)

    @property
    def scene_layers(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every layer of f."""
        widths = (3,) + self.scene_net_shape + (self.repr_dim,)
        return list(zip(widths[:-1], widths[1:]))

    @property
    def scene_param_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.scene_layers)

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple): data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'SigmaSrnConfig':
        return cls(**data)
