import logging
import math
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from srnpose import diffcore as dc
from srnpose.constants.constants import (
    DEFAULT_LATENT_WEIGHT,
    DEFAULT_SEED,
    DEFAULT_TRAIN_BATCH,
    DEFAULT_TRAIN_LR,
)
from srnpose.constants.messages import ErrorMessages, RunMessages
from srnpose.data.dataset_io import MultiViewDataset
from srnpose.diffcore import AdamState, adam_step
from srnpose.errors import NonFiniteError, TrainingError
from srnpose.geometry import matrix_to_pose
from srnpose.renderer.model import EMBEDDING, SigmaSrnModel
from srnpose.renderer.render import embed, render

logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    """Progress carried across runs so training can resume where a checkpoint left off."""
    step_count: int = 0
    epochs_done: int = 0
    optimizer: AdamState | None = None


@dataclass
class TrainResult:
    model: SigmaSrnModel
    history: list[float] = field(default_factory=list)
    state: TrainState = field(default_factory=TrainState)


def sample_loss(model_view, pose, target: np.ndarray, K, index: int, latent_weight: float,
                rng: np.random.Generator | None = None) -> tuple[dc.Tensor, float]:
    """MSE between render and target plus latent_weight * ||embedding||^2, and the plain MSE."""
    image = render(pose, K, index, model_view, rng=rng)
    mse = dc.mean(dc.square(image - dc.as_tensor(target)))
    if latent_weight == 0:
        return mse, mse.item()
    latent = dc.sum(dc.square(embed(index, model_view[EMBEDDING])))
    return mse + dc.scale(latent, latent_weight), mse.item()


def train(dataset: MultiViewDataset, model: SigmaSrnModel, epochs: int, lr: float = DEFAULT_TRAIN_LR,
          batch: int = DEFAULT_TRAIN_BATCH, latent_weight: float = DEFAULT_LATENT_WEIGHT,
          seed: int = DEFAULT_SEED, state: TrainState | None = None, max_steps: int | None = None,
          progress: bool = False) -> TrainResult:
    """
    Fit every renderer parameter to the dataset with Adam.
    Each optimizer step averages, over a batch of views, the squared image error plus the latent
    penalty latent_weight * ||embedding||^2. Gradients are accumulated one view at a time so only
    one render graph is alive at once.
    :param dataset: posed images; instance i trains embedding column i
    :param model: starting parameters
    :param epochs: passes over the views; 0 returns the model unchanged
    :param lr: Adam learning rate
    :param batch: views per optimizer step
    :param latent_weight: coefficient of the embedding penalty
    :param seed: shuffling and ray-jitter seed
    :param state: state of a previous run to resume from
    :param max_steps: stop after this many optimizer steps in this call; an epoch cut short is
        not counted in epochs_done, so a resume replays it
    :param progress: show a progress bar
    :return: TrainResult with the per-epoch mean loss (MSE part) and the updated state
    :raises TrainingError: on a non-finite loss or gradient, with the epoch, instance and pose
    """
    if epochs < 0: raise ValueError(ErrorMessages.BAD_EPOCHS)
    if batch < 1: raise ValueError(ErrorMessages.BAD_BATCH)
    if dataset.view_count == 0: raise ValueError(ErrorMessages.EMPTY_DATASET)
    if len(dataset.instances) > model.num_instances: raise ValueError(
        ErrorMessages.TOO_MANY_INSTANCES.format(count=len(dataset.instances), capacity=model.num_instances))

    state = state or TrainState()
    if state.optimizer is None:
        state.optimizer = AdamState.zeros(model.params, lr)
    state.optimizer.lr = lr

    samples = [(index, view, matrix_to_pose(view.pose)) for index, view in dataset.samples()]
    K = dataset.intrinsics
    params = dict(model.params)
    history: list[float] = []
    steps_taken = 0

    for epoch in range(state.epochs_done, state.epochs_done + epochs):
        rng = np.random.default_rng((seed, epoch))
        order = rng.permutation(len(samples))
        epoch_losses = []
        batches = [order[i:i + batch] for i in range(0, len(order), batch)]
        completed = True
        for number, chunk in enumerate(tqdm(batches, desc=f"epoch {epoch}", disable=not progress, leave=False)):
            view = SigmaSrnModel(model.config, params, model.num_instances).view(trainable=list(params))
            grads = {name: np.zeros_like(value) for name, value in params.items()}
            for position in chunk:
                index, sample, pose = samples[position]
                loss, mse = sample_loss(view, pose, sample.image, K, index, latent_weight, rng)
                if not math.isfinite(loss.item()):
                    dc.current_graph().release()
                    raise TrainingError(
                        ErrorMessages.NON_FINITE_LOSS.format(epoch=epoch, instance=index, pose=list(pose.as_array())),
                        epoch, index, list(pose.as_array()), history)
                for leaf, grad in dc.backward(dc.scale(loss, 1.0 / len(chunk))).items():
                    grads[leaf.name] += grad
                epoch_losses.append(mse)
            try:
                params, state.optimizer = adam_step(params, grads, state.optimizer)
            except NonFiniteError as e:
                raise TrainingError(str(e), epoch, int(samples[chunk[0]][0]),
                                    list(samples[chunk[0]][2].as_array()), history)
            state.step_count += 1
            steps_taken += 1
            if max_steps is not None and steps_taken >= max_steps:
                completed = number == len(batches) - 1
                break
        history.append(float(np.mean(epoch_losses)))
        if completed:
            state.epochs_done = epoch + 1
        logger.info(RunMessages.EPOCH_DONE.format(epoch=epoch, loss=history[-1], steps=state.step_count))
        if max_steps is not None and steps_taken >= max_steps:
            break

    trained = SigmaSrnModel(model.config, params, model.num_instances) if epochs else model
    return TrainResult(trained, history, state)
