from srnpose.renderer.config import SigmaSrnConfig
from srnpose.renderer.model import SigmaSrnModel
from srnpose.renderer.render import (
    RayState,
    aggregate,
    density,
    embed,
    generate_pixels,
    march_step,
    render,
    render_image,
    scene_repr,
)
from srnpose.renderer.train import TrainResult, TrainState, train
