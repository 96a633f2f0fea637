"""
Differentiable primitives.

Every op computes its forward value with numpy and, when any input requires grad, records a
backward closure on the current thread's tape. There is no implicit broadcasting: elementwise
ops need identical shapes and `expand` is the only way to tile a tensor.
"""
import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore.graph import current_graph, grad_enabled
from srnpose.diffcore.tensor import Tensor, get_dtype
from srnpose.errors import ShapeError


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor): return value
    return Tensor._constant(np.ascontiguousarray(value, dtype=get_dtype()))


def _record(op: str, inputs: tuple[Tensor, ...], out: np.ndarray, backward) -> Tensor:
    out = np.ascontiguousarray(out, dtype=get_dtype())
    if grad_enabled() and builtins.any(t.requires_grad for t in inputs):
        graph = current_graph()
        return Tensor._from_op(out, graph, graph.record(op, inputs, backward))
    return Tensor._constant(out)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape: raise ShapeError(
        ErrorMessages.SHAPE_MISMATCH.format(op=op, left=a.shape, right=b.shape), op, a.shape, b.shape)


def _axes(op: str, axis, ndim: int, shape) -> tuple[int, ...]:
    if axis is None: return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    for ax in axes:
        if not -ndim <= ax < ndim: raise ShapeError(
            ErrorMessages.BAD_AXIS.format(op=op, axis=ax, shape=shape), op, shape, ())
    return tuple(ax % ndim for ax in axes)


# ====Elementwise binary====

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('add', a, b)
    return _record('add', (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('sub', a, b)
    return _record('sub', (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('mul', a, b)
    return _record('mul', (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape('div', a, b)
    out = a.data / b.data
    return _record('div', (a, b), out, lambda g: (g / b.data, -g * out / b.data))


# ====Scalar and unary====

def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    return _record('scale', (a,), a.data * s, lambda g: (g * s,))


def shift(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    return _record('shift', (a,), a.data + s, lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('neg', (a,), -a.data, lambda g: (-g,))


def abs(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('abs', (a,), np.abs(a.data), lambda g: (g * np.sign(a.data),))


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('square', (a,), a.data * a.data, lambda g: (g * 2.0 * a.data,))


def sqrt(a: Tensor) -> Tensor:
    """Square root; the gradient at exactly zero is taken as zero."""
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * 0.5 / safe, 0.0),)

    return _record('sqrt', (a,), out, backward)


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record('exp', (a,), out, lambda g: (g * out,))


def sin(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('sin', (a,), np.sin(a.data), lambda g: (g * np.cos(a.data),))


def cos(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('cos', (a,), np.cos(a.data), lambda g: (-g * np.sin(a.data),))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _record('sigmoid', (a,), out, lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record('tanh', (a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record('relu', (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record('softplus', (a,), np.logaddexp(0.0, a.data), lambda g: (g * expit(a.data),))


# ====Contractions and reductions====

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]: raise ShapeError(
        ErrorMessages.SHAPE_MISMATCH.format(op='matmul', left=a.shape, right=b.shape), 'matmul', a.shape, b.shape)
    return _record('matmul', (a, b), a.data @ b.data,
                   lambda g: (g @ b.data.T if a.requires_grad else None,
                              a.data.T @ g if b.requires_grad else None))


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axes('sum', axis, a.ndim, a.shape)
    kept_shape = tuple(1 if i in axes else n for i, n in enumerate(a.shape))

    def backward(g):
        return (np.broadcast_to(np.reshape(g, kept_shape), a.shape).copy(),)

    return _record('sum', (a,), np.sum(a.data, axis=axes, keepdims=keepdims), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axes('mean', axis, a.ndim, a.shape)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    kept_shape = tuple(1 if i in axes else n for i, n in enumerate(a.shape))

    def backward(g):
        return (np.broadcast_to(np.reshape(g, kept_shape) / count, a.shape).copy(),)

    return _record('mean', (a,), np.mean(a.data, axis=axes, keepdims=keepdims), backward)


# ====Layout====

def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(ErrorMessages.BAD_RESHAPE.format(left=a.shape, right=shape), 'reshape', a.shape, shape)
    return _record('reshape', (a,), out, lambda g: (np.reshape(g, a.shape),))


def slice(a: Tensor, index) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data[index]
    except IndexError:
        raise ShapeError(ErrorMessages.BAD_AXIS.format(op='slice', axis=index, shape=a.shape), 'slice', a.shape, ())

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record('slice', (a,), out, backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors: raise ShapeError(ErrorMessages.EMPTY_CONCAT, 'concat')
    first = tensors[0]
    axis = _axes('concat', axis, first.ndim, first.shape)[0]
    for t in tensors[1:]:
        rest_t = t.shape[:axis] + t.shape[axis + 1:]
        rest_first = first.shape[:axis] + first.shape[axis + 1:]
        if t.ndim != first.ndim or rest_t != rest_first: raise ShapeError(
            ErrorMessages.SHAPE_MISMATCH.format(op='concat', left=first.shape, right=t.shape),
            'concat', first.shape, t.shape)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record('concat', tensors, np.concatenate([t.data for t in tensors], axis=axis),
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


def expand(a: Tensor, shape) -> Tensor:
    """Tile size-1 axes of `a` up to `shape`; the only broadcasting the engine allows."""
    a = as_tensor(a)
    shape = tuple(shape)
    if len(shape) != a.ndim or builtins.any(n != m and n != 1 for n, m in zip(a.shape, shape)):
        raise ShapeError(ErrorMessages.BAD_EXPAND.format(left=a.shape, right=shape), 'expand', a.shape, shape)
    axes = tuple(i for i, (n, m) in enumerate(zip(a.shape, shape)) if n == 1 and m != 1)
    return _record('expand', (a,), np.broadcast_to(a.data, shape),
                   lambda g: (np.sum(g, axis=axes, keepdims=True),))


def expand_rows(a: Tensor, rows: int) -> Tensor:
    """(d,) or (1, d) -> (rows, d)."""
    a = as_tensor(a)
    if a.ndim == 1: a = reshape(a, (1, a.shape[0]))
    return expand(a, (rows, a.shape[1]))


def permute(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record('permute', (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inverse),))


def im2grid(rows: Tensor, count: int, height: int, width: int) -> Tensor:
    """
    Arrange per-pixel row vectors (count*height*width, C), row-major over pixels, as an NCHW grid.
    """
    rows = as_tensor(rows)
    if rows.ndim != 2 or rows.shape[0] != count * height * width: raise ShapeError(
        ErrorMessages.SHAPE_MISMATCH.format(op='im2grid', left=rows.shape, right=(count * height * width, '*')),
        'im2grid', rows.shape, (count, height, width))
    channels = rows.shape[1]
    out = rows.data.reshape(count, height, width, channels).transpose(0, 3, 1, 2)
    return _record('im2grid', (rows,), out,
                   lambda g: (np.transpose(g, (0, 2, 3, 1)).reshape(rows.shape),))


def grid2im(grid: Tensor) -> Tensor:
    """NCHW -> NHWC."""
    return permute(grid, (0, 2, 3, 1))


# ====Convolution====

def _conv_forward(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    pad = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
    out = (cols @ w.reshape(o, c * k * k).T).reshape(n, h, wd, o).transpose(0, 3, 1, 2)
    return out, cols


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """
    2D cross-correlation, stride 1, zero padding that keeps the spatial size.
    :param x: (N, C, H, W)
    :param weight: (O, C, k, k) with k odd
    :param bias: optional (O,)
    :return: (N, O, H, W)
    :raises ShapeError: on non-conforming shapes or an even kernel
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1] or weight.shape[2] != weight.shape[3]:
        raise ShapeError(ErrorMessages.BAD_CONV_INPUT.format(left=x.shape, right=weight.shape),
                         'conv2d', x.shape, weight.shape)
    if weight.shape[2] % 2 != 1: raise ShapeError(
        ErrorMessages.BAD_KERNEL.format(size=weight.shape[2]), 'conv2d', x.shape, weight.shape)
    n, c, h, wd = x.shape
    o, _, k, _ = weight.shape
    out, cols = _conv_forward(x.data, weight.data)
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,): raise ShapeError(
            ErrorMessages.SHAPE_MISMATCH.format(op='conv2d', left=bias.shape, right=(o,)), 'conv2d', bias.shape, (o,))
        out = out + bias.data.reshape(1, o, 1, 1)
        inputs = (x, weight, bias)

    def backward(g):
        grad_x = None
        if x.requires_grad:
            flipped = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            grad_x, _ = _conv_forward(g, np.ascontiguousarray(flipped))
        rows = g.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
        grad_w = (cols.T @ rows).T.reshape(o, c, k, k) if weight.requires_grad else None
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _record('conv2d', inputs, out, backward)
