from srnpose.renderer.config import SigmaSrnConfig

TINY_SIZE = 6
TOY_RADIUS = 1.3


def tiny_config(**changes) -> SigmaSrnConfig:
    """A renderer small enough that a full forward and backward pass takes milliseconds."""
    options = dict(embed_dim=4, repr_dim=4, march_steps=3, hyper_hidden=(4,), scene_net_shape=(5,),
                   density_hidden=(4,), lstm_hidden=3, pixgen_channels=3, pixgen_kernel=3,
                   image_hw=(TINY_SIZE, TINY_SIZE))
    options.update(changes)
    return SigmaSrnConfig(**options)
