from typing import Callable, Sequence

import numpy as np

from srnpose.constants.constants import FINITE_DIFFERENCE_STEP
from srnpose.diffcore.graph import backward, no_grad
from srnpose.diffcore.tensor import Tensor


def numerical_gradient(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                       h: float = FINITE_DIFFERENCE_STEP) -> list[np.ndarray]:
    """
    Central finite differences of a scalar-valued function for each input array.
    :param fn: takes Tensors, returns a scalar Tensor
    :param inputs: input arrays (not modified)
    :param h: step
    :return: one gradient array per input
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    grads = []
    with no_grad():
        for i, array in enumerate(arrays):
            grad = np.zeros_like(array)
            flat = array.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + h
                plus = fn(*[Tensor(a) for a in arrays]).item()
                flat[j] = original - h
                minus = fn(*[Tensor(a) for a in arrays]).item()
                flat[j] = original
                grad.reshape(-1)[j] = (plus - minus) / (2.0 * h)
            grads.append(grad)
    return grads


def analytic_gradient(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    backward(fn(*leaves))
    return [leaf.grad for leaf in leaves]


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray], floor: float = 1e-4) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)) if a.size else 0.0)
    return worst


def gradient_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                   h: float = FINITE_DIFFERENCE_STEP) -> float:
    """Max relative error between backward() and central differences."""
    return max_relative_error(analytic_gradient(fn, inputs), numerical_gradient(fn, inputs, h))
