from dataclasses import dataclass, field

import numpy as np

from srnpose.constants.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from srnpose.constants.messages import ErrorMessages
from srnpose.errors import NonFiniteError


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""
    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr < 0: raise ValueError(ErrorMessages.BAD_LR)

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray], lr: float, **kwargs) -> 'AdamState':
        state = cls(lr=lr, **kwargs)
        for name, value in params.items():
            state.first_moment[name] = np.zeros_like(value)
            state.second_moment[name] = np.zeros_like(value)
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.
    Parameters are not modified in place: the returned dict holds new arrays for every
    updated name, so callers sharing the old arrays read-only are unaffected.
    Names without a gradient entry are carried over unchanged.
    :param params: name -> parameter array
    :param grads: name -> gradient array of the same shape
    :param state: moments and hyperparameters; moments are updated and step_count incremented
    :return: (new params, state)
    :raises NonFiniteError: if any gradient holds NaN or inf, before anything is updated
    :raises ValueError: if a gradient's shape differs from its parameter's
    """
    for name, grad in grads.items():
        if grad.shape != params[name].shape: raise ValueError(
            ErrorMessages.ADAM_SHAPES.format(name=name, left=params[name].shape, right=grad.shape))
        if not np.all(np.isfinite(grad)): raise NonFiniteError(
            ErrorMessages.NON_FINITE_GRAD.format(name=name), name=name)

    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count

    updated = dict(params)
    for name, grad in grads.items():
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(params[name])
            v = np.zeros_like(params[name])
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = params[name] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, state
