"""
Forward model: embedding -> hypernetwork -> per-step scene representation and density along a
learned ray march -> density-weighted aggregation -> convolutional pixel generator.
"""
from dataclasses import dataclass

import numpy as np

from srnpose import diffcore as dc
from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore import Tensor
from srnpose.geometry import Intrinsics, Pose6DoF, pose_to_matrix, ray_directions
from srnpose.renderer.model import EMBEDDING, ModelView, SigmaSrnModel


@dataclass
class RayState:
    coords: Tensor
    lstm_hidden: Tensor
    lstm_cell: Tensor
    step_index: int = 0


@dataclass
class Trace:
    """Aggregated per-pixel representation plus the per-step samples it was built from."""
    field: Tensor
    sigmas: list[Tensor]
    phis: list[Tensor]
    coords: list[Tensor]


def _view(model: SigmaSrnModel | ModelView) -> ModelView:
    return model if isinstance(model, ModelView) else model.view()


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return dc.matmul(x, w) + dc.expand_rows(b, x.shape[0])


def embed(index: int, theta_e: Tensor) -> Tensor:
    """Column `index` of theta_e, i.e. theta_e @ onehot(index)."""
    count = theta_e.shape[1]
    if not 0 <= index < count: raise IndexError(ErrorMessages.BAD_INSTANCE.format(index=index, count=count))
    return theta_e[:, index]


def hypernetwork(embedding: Tensor, model: SigmaSrnModel | ModelView) -> list[tuple[Tensor, Tensor]]:
    """(weight, bias) of every layer of the scene network f, generated from one embedding."""
    view = _view(model)
    depth = len(view.config.hyper_hidden) + 1
    layers = []
    for layer, (fan_in, fan_out) in enumerate(view.config.scene_layers):
        h = dc.reshape(embedding, (1, embedding.shape[0]))
        for j in range(depth):
            h = _linear(h, view[f'hyper.{layer}.w{j}'], view[f'hyper.{layer}.b{j}'])
            if j < depth - 1:
                h = dc.relu(h)
        weight = dc.reshape(h[0, :fan_in * fan_out], (fan_in, fan_out))
        bias = h[0, fan_in * fan_out:]
        layers.append((weight, bias))
    return layers


def scene_forward(coords: Tensor, scene_weights: list[tuple[Tensor, Tensor]]) -> Tensor:
    h = coords
    for j, (weight, bias) in enumerate(scene_weights):
        h = _linear(h, weight, bias)
        if j < len(scene_weights) - 1:
            h = dc.relu(h)
    return h


def scene_repr(coords: Tensor, index: int, model: SigmaSrnModel | ModelView,
               embedding: Tensor | None = None) -> Tensor:
    """
    phi = f(coords; theta_f) with theta_f emitted by the hypernetwork from instance `index`.
    :param coords: (P, 3)
    :param embedding: overrides the looked-up embedding when given
    :return: (P, repr_dim)
    """
    view = _view(model)
    if embedding is None: embedding = embed(index, view[EMBEDDING])
    return scene_forward(dc.as_tensor(coords), hypernetwork(embedding, view))


def density(coords: Tensor, model: SigmaSrnModel | ModelView) -> Tensor:
    """sigma = sigmoid(g(coords)), shape (P, 1)."""
    view = _view(model)
    depth = len(view.config.density_hidden) + 1
    h = dc.as_tensor(coords)
    for j in range(depth):
        h = _linear(h, view[f'density.w{j}'], view[f'density.b{j}'])
        if j < depth - 1:
            h = dc.relu(h)
    return dc.sigmoid(h)


def initial_state(origin: Tensor, directions: Tensor, model: SigmaSrnModel | ModelView,
                  rng: np.random.Generator | None = None) -> RayState:
    """
    Ray starts near the focal plane: origin + offset * direction. With an rng the offset is
    jittered uniformly by +-ray_jitter (training only).
    """
    view = _view(model)
    rows = directions.shape[0]
    offsets = np.full((rows, 1), view.config.near_plane_offset)
    if rng is not None and view.config.ray_jitter > 0:
        offsets = offsets + rng.uniform(-view.config.ray_jitter, view.config.ray_jitter, size=(rows, 1))
    start = dc.expand_rows(origin, rows) + directions * dc.as_tensor(np.repeat(offsets, 3, axis=1))
    zeros = np.zeros((rows, view.config.lstm_hidden))
    return RayState(start, dc.as_tensor(zeros), dc.as_tensor(zeros), 0)


def march_step(state: RayState, phi: Tensor, model: SigmaSrnModel | ModelView) -> RayState:
    """
    One LSTM cell step on phi (gate order i, f, g, o) followed by a linear head to a world-space
    3-vector that is added to coords. The offset is free to leave the ray.
    """
    view = _view(model)
    h = view.config.lstm_hidden
    rows = phi.shape[0]
    gates = dc.matmul(phi, view['lstm.wx']) + dc.matmul(state.lstm_hidden, view['lstm.wh']) \
        + dc.expand_rows(view['lstm.b'], rows)
    i = dc.sigmoid(gates[:, 0:h])
    f = dc.sigmoid(gates[:, h:2 * h])
    g = dc.tanh(gates[:, 2 * h:3 * h])
    o = dc.sigmoid(gates[:, 3 * h:4 * h])
    cell = f * state.lstm_cell + i * g
    hidden = o * dc.tanh(cell)
    coords = state.coords + _linear(hidden, view['lstm.head_w'], view['lstm.head_b'])
    return RayState(coords, hidden, cell, state.step_index + 1)


def aggregate(sigmas: list[Tensor], phis: list[Tensor], normalize: bool = False) -> Tensor:
    """
    phi = sum_i sigma_i * phi_i over the ray samples.
    :param sigmas: M tensors of shape (P, 1)
    :param phis: M tensors of shape (P, R)
    :param normalize: divide by sum_i sigma_i
    :raises ValueError: if the lists differ in length
    """
    if len(sigmas) != len(phis) or not sigmas: raise ValueError(
        ErrorMessages.AGGREGATE_LENGTH.format(sigmas=len(sigmas), phis=len(phis)))
    shape = phis[0].shape
    total = None
    for sigma, phi in zip(sigmas, phis):
        term = dc.expand(sigma, shape) * phi
        total = term if total is None else total + term
    if normalize:
        weight = sigmas[0]
        for sigma in sigmas[1:]:
            weight = weight + sigma
        total = total / dc.expand(weight, shape)
    return total


def generate_pixels(field: Tensor, model: SigmaSrnModel | ModelView) -> Tensor:
    """
    Two 'same' convolutions (relu between) and a sigmoid over the H x W x repr_dim field.
    :param field: (H*W, repr_dim), rows ordered row-major over pixels
    :return: (H, W, 3) image with values in [0, 1]
    """
    view = _view(model)
    height, width = view.config.image_hw
    if field.shape[0] != height * width: raise ValueError(ErrorMessages.FIELD_SHAPE.format(
        rows=field.shape[0], expected=height * width, height=height, width=width))
    grid = dc.im2grid(field, 1, height, width)
    hidden = dc.relu(dc.conv2d(grid, view['pixgen.w0'], view['pixgen.b0']))
    rgb = dc.sigmoid(dc.conv2d(hidden, view['pixgen.w1'], view['pixgen.b1']))
    return dc.reshape(dc.grid2im(rgb), (height, width, 3))


def trace_rays(origin: Tensor, directions: Tensor, model: SigmaSrnModel | ModelView,
               scene_weights: list[tuple[Tensor, Tensor]], rng: np.random.Generator | None = None) -> Trace:
    """March M samples along each ray, querying f and g at every sample, and aggregate."""
    view = _view(model)
    state = initial_state(origin, directions, view, rng)
    sigmas, phis, coords = [], [], []
    steps = view.config.march_steps
    for i in range(steps):
        phi = scene_forward(state.coords, scene_weights)
        sigmas.append(density(state.coords, view))
        phis.append(phi)
        coords.append(state.coords)
        if i < steps - 1:
            state = march_step(state, phi, view)
    return Trace(aggregate(sigmas, phis, view.config.normalize_weights), sigmas, phis, coords)


def _pose_tensor(pose) -> Tensor:
    if isinstance(pose, Tensor): return pose
    if isinstance(pose, Pose6DoF): return dc.as_tensor(pose.as_array())
    return dc.as_tensor(np.asarray(pose, dtype=np.float64).reshape(6))


def trace(pose, K: Intrinsics, index: int, model: SigmaSrnModel | ModelView,
          embedding: Tensor | None = None, rng: np.random.Generator | None = None) -> Trace:
    view = _view(model)
    if (K.height, K.width) != view.config.image_hw: raise ValueError(ErrorMessages.FIELD_SHAPE.format(
        rows=K.pixel_count, expected=view.config.image_hw[0] * view.config.image_hw[1],
        height=view.config.image_hw[0], width=view.config.image_hw[1]))
    if embedding is None: embedding = embed(index, view[EMBEDDING])
    directions, origin = ray_directions(K, pose_to_matrix(_pose_tensor(pose)))
    return trace_rays(origin, directions, view, hypernetwork(embedding, view), rng)


def render(pose, K: Intrinsics, index: int, model: SigmaSrnModel | ModelView,
           embedding: Tensor | None = None, rng: np.random.Generator | None = None) -> Tensor:
    """
    Render instance `index` from a camera pose.
    The pose may be a Pose6DoF, an array of six values, or a (6,) Tensor; a Tensor that
    requires grad receives d(image)/d(pose) on backward.
    :param pose: camera-to-world pose
    :param K: intrinsics; its size must equal the model's image_hw
    :param index: instance column
    :param model: model or a ModelView (to choose which parameters are trainable)
    :param embedding: optional replacement embedding (two-shot adaptation)
    :param rng: enables ray-start jitter when given
    :return: (H, W, 3) Tensor in [0, 1]
    """
    view = _view(model)
    return generate_pixels(trace(pose, K, index, view, embedding, rng).field, view)


def render_image(pose, K: Intrinsics, index: int, model: SigmaSrnModel) -> np.ndarray:
    """Inference-only render as a numpy array; nothing is recorded."""
    with dc.no_grad():
        return render(pose, K, index, model).numpy()
