import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from srnpose.constants.messages import ErrorMessages
from srnpose.diffcore.tensor import Tensor
from srnpose.errors import BackwardError, CrossSampleError

GradientMap = dict[Tensor, np.ndarray]


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Graph:
    """
    Tape of recorded operations. Nodes are appended as ops run, so every node's inputs
    precede it and the append order is a topological order. A graph is consumed by backward.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.released = False

    def record(self, op: str, inputs: tuple[Tensor, ...], backward) -> int:
        self.nodes.append(Node(op, inputs, backward))
        return len(self.nodes) - 1

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and tensor.node_id is None:
                    seen.setdefault(id(tensor), tensor)
        return list(seen.values())

    def release(self) -> None:
        self.released = True
        self.nodes = []

    def __len__(self) -> int:
        return len(self.nodes)


_local = threading.local()


def current_graph() -> Graph:
    """
    The graph new ops record into. Each thread owns its own tape; a released tape is replaced.
    """
    graph = getattr(_local, 'graph', None)
    if graph is None or graph.released:
        graph = Graph()
        _local.graph = graph
    return graph


def new_graph() -> Graph:
    _local.graph = Graph()
    return _local.graph


def grad_enabled() -> bool:
    return getattr(_local, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    previous = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = previous


def _check_root(root: Tensor) -> None:
    if root.data.size != 1: raise BackwardError(ErrorMessages.NON_SCALAR_ROOT.format(shape=root.shape))
    if not root.requires_grad: raise BackwardError(ErrorMessages.ROOT_NO_GRAD)
    if root.graph is not None and root.graph.released: raise BackwardError(ErrorMessages.GRAPH_RELEASED)


def _sweep(graph: Graph, seeds: dict[int, np.ndarray], start: int) -> dict[int, tuple[Tensor, np.ndarray]]:
    grads = dict(seeds)
    leaf_grads: dict[int, tuple[Tensor, np.ndarray]] = {}
    for index in range(start, -1, -1):
        upstream = grads.pop(index, None)
        if upstream is None:
            continue
        node = graph.nodes[index]
        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.node_id is not None:
                previous = grads.get(tensor.node_id)
                grads[tensor.node_id] = grad if previous is None else previous + grad
            else:
                previous = leaf_grads.get(id(tensor))
                leaf_grads[id(tensor)] = (tensor, grad if previous is None else previous[1] + grad)
    return leaf_grads


def backward(root: Tensor) -> GradientMap:
    """
    Reverse sweep from a scalar root.
    Every requires_grad leaf recorded in the root's graph ends up with d(root)/d(leaf) in `.grad`;
    leaves the root does not reach get zeros. The graph is released afterwards.
    :param root: scalar Tensor produced by recorded ops (or a scalar leaf)
    :return: mapping leaf -> gradient array
    :raises BackwardError: if root is not scalar, does not require grad, or its graph was already consumed
    """
    _check_root(root)
    if root.node_id is None:
        root.grad = np.ones_like(root.data)
        return {root: root.grad}

    graph = root.graph
    leaf_grads = _sweep(graph, {root.node_id: np.ones_like(root.data)}, root.node_id)
    result: GradientMap = {}
    for leaf in graph.leaves():
        entry = leaf_grads.get(id(leaf))
        leaf.grad = entry[1].reshape(leaf.shape) if entry is not None else np.zeros_like(leaf.data)
        result[leaf] = leaf.grad
    graph.release()
    return result


def _reachable(graph: Graph, root: Tensor) -> tuple[set[int], dict[int, Tensor]]:
    nodes: set[int] = set()
    leaves: dict[int, Tensor] = {}
    if root.node_id is None:
        return nodes, {id(root): root}
    stack = [root.node_id]
    while stack:
        index = stack.pop()
        if index in nodes:
            continue
        nodes.add(index)
        for tensor in graph.nodes[index].inputs:
            if not tensor.requires_grad:
                continue
            if tensor.node_id is None:
                leaves[id(tensor)] = tensor
            else:
                stack.append(tensor.node_id)
    return nodes, leaves


def per_sample_backward(roots: Sequence[Tensor], leaves: Sequence[Iterable[Tensor] | Tensor]) -> list[GradientMap]:
    """
    Gradients of several independent scalar roots in one reverse sweep.
    Root i may only reach its own sample's leaves; because the subgraphs are disjoint the
    single sweep yields exactly what `backward(roots[i])` alone would.
    :param roots: one scalar Tensor per sample, all in the same graph
    :param leaves: per sample, the pose leaves (a Tensor or an iterable of Tensors)
    :return: per sample, mapping of that sample's leaves to their gradients
    :raises CrossSampleError: if any leaf is reachable from two roots
    :raises BackwardError: on the conditions of `backward`
    """
    if len(roots) != len(leaves): raise BackwardError(
        ErrorMessages.ROOT_LEAF_COUNT.format(roots=len(roots), leaves=len(leaves)))
    for root in roots:
        _check_root(root)
    groups = [[group] if isinstance(group, Tensor) else list(group) for group in leaves]
    graphs = {id(root.graph): root.graph for root in roots if root.graph is not None}
    graph = next(iter(graphs.values()), None)

    owner: dict[int, int] = {}
    for sample, root in enumerate(roots):
        _, reached = _reachable(graph, root) if graph is not None else (set(), {id(root): root})
        for key, leaf in reached.items():
            if key in owner and owner[key] != sample:
                raise CrossSampleError(ErrorMessages.CROSS_SAMPLE.format(
                    leaf=leaf.name or leaf.shape, first=owner[key], second=sample))
            owner[key] = sample
    for sample, group in enumerate(groups):
        for leaf in group:
            if owner.get(id(leaf), sample) != sample:
                raise CrossSampleError(ErrorMessages.CROSS_SAMPLE.format(
                    leaf=leaf.name or leaf.shape, first=owner[id(leaf)], second=sample))

    seeds = {root.node_id: np.ones_like(root.data) for root in roots if root.node_id is not None}
    leaf_grads = _sweep(graph, seeds, max(seeds)) if seeds else {}
    results: list[GradientMap] = []
    for root, group in zip(roots, groups):
        sample_grads: GradientMap = {}
        for leaf in group:
            if leaf is root:
                grad = np.ones_like(leaf.data)
            else:
                entry = leaf_grads.get(id(leaf))
                grad = entry[1].reshape(leaf.shape) if entry is not None else np.zeros_like(leaf.data)
            leaf.grad = grad
            sample_grads[leaf] = grad
        results.append(sample_grads)
    for graph in graphs.values():
        graph.release()
    return results
