import os

import numpy as np

from srnpose.constants.constants import DEFAULT_PRECISION, SUPPORTED_PRECISIONS
from srnpose.constants.messages import ErrorMessages

_precision = np.dtype(os.getenv("SRNPOSE_PRECISION", DEFAULT_PRECISION))


def set_precision(name: str) -> None:
    """
    Switch the engine-wide floating point type.
    float64 is the default and what every gradient check assumes; float32 is meant for training runs.
    :param name: 'float64' or 'float32'
    :raises ValueError: if name is not a supported precision
    """
    global _precision
    if name not in SUPPORTED_PRECISIONS: raise ValueError(
        ErrorMessages.BAD_DTYPE.format(choices=SUPPORTED_PRECISIONS, value=name))
    _precision = np.dtype(name)


def get_dtype() -> np.dtype:
    return _precision


class Tensor:
    """
    n-dimensional array taking part in a reverse-mode computation graph.

    `data` is a contiguous numpy array in the engine precision. Tensors produced by a recorded
    op carry the graph and their node index; leaves have node_id None. `grad` is only ever
    written for tensors with requires_grad=True, and always has the tensor's shape.
    """

    __slots__ = ('data', 'grad', 'requires_grad', 'node_id', 'graph', 'name', '__weakref__')

    def __init__(self, data, requires_grad: bool = False, name: str = '') -> None:
        self.data = np.ascontiguousarray(data, dtype=_precision)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id: int | None = None
        self.graph = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, graph, node_id: int) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = True
        out.node_id = node_id
        out.graph = graph
        out.name = ''
        return out

    @classmethod
    def _constant(cls, data: np.ndarray) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out.node_id = None
        out.graph = None
        out.name = ''
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> 'Tensor':
        return Tensor._constant(self.data)

    def __repr__(self) -> str:
        label = f", name='{self.name}'" if self.name else ''
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # Operators: Tensor with Tensor is elementwise (shapes must match), Tensor with a
    # python number is a scalar op.
    def __add__(self, other):
        if isinstance(other, Tensor): return ops.add(self, other)
        return ops.shift(self, float(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, Tensor): return ops.sub(self, other)
        return ops.shift(self, -float(other))

    def __rsub__(self, other):
        return ops.shift(ops.neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor): return ops.mul(self, other)
        return ops.scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, Tensor): return ops.div(self, other)
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.slice(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)): shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return ops.mean(self, axis=axis, keepdims=keepdims)

    @property
    def T(self):
        return ops.permute(self, tuple(reversed(range(self.ndim))))


from srnpose.diffcore import ops  # noqa: E402  (ops needs Tensor defined first)
