"""Define-by-run computation graph with reverse-mode gradients.

A :class:`Graph` records primitive applications in construction order, which
is always a topological order. Recorded values are read-only, so a built
graph can be shared between threads; ``replay`` recomputes forward values with
substituted leaves, which is what :mod:`tensorcore.gradcheck` relies on.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import GraphError, NonScalarOutputError, NotALeafError
from .primitives import Tensor, as_tensor, frozen, get_primitive

logger = logging.getLogger(__name__)

LEAF = "leaf"


@dataclass(frozen=True, eq=False)
class Node:
    """One recorded value: a leaf or the output of a primitive."""
    index: int
    op: str
    inputs: Tuple[int, ...]
    value: Tensor
    attrs: Dict[str, Any] = field(default_factory=dict)
    name: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.op == LEAF

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)


class Graph:
    """Append-only record of tensor computations."""

    def __init__(self):
        self._nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes)

    @property
    def output(self) -> Node:
        if not self._nodes:
            raise GraphError("Graph is empty")
        return self._nodes[-1]

    def _own(self, node: Node) -> Node:
        if not isinstance(node, Node) or node.index >= len(self._nodes) or self._nodes[node.index] is not node:
            raise GraphError(f"Node {node!r} does not belong to this graph")
        return node

    def leaf(self, value: Any, name: Optional[str] = None) -> Node:
        """Record an input tensor (parameter, perturbation or constant)."""
        node = Node(len(self._nodes), LEAF, (), frozen(as_tensor(value).copy()), {}, name)
        self._nodes.append(node)
        return node

    def apply(self, op: str, *inputs: Node, **attrs: Any) -> Node:
        primitive = get_primitive(op)
        if len(inputs) not in primitive.arity:
            raise GraphError(f"{op}: expected {primitive.arity} inputs, got {len(inputs)}")
        owned = [self._own(node) for node in inputs]
        value = np.asarray(primitive.forward([node.value for node in owned], attrs), dtype=np.float64)
        node = Node(len(self._nodes), op, tuple(n.index for n in owned), frozen(value), dict(attrs))
        self._nodes.append(node)
        return node

    # Convenience wrappers for the primitives the denoiser uses.

    def conv2d(self, x: Node, kernel: Node, bias: Optional[Node] = None) -> Node:
        return self.apply("conv2d", x, kernel) if bias is None else self.apply("conv2d", x, kernel, bias)

    def relu(self, x: Node) -> Node:
        return self.apply("relu", x)

    def add(self, a: Node, b: Node) -> Node:
        return self.apply("add", a, b)

    def sub(self, a: Node, b: Node) -> Node:
        return self.apply("sub", a, b)

    def scale(self, x: Node, factor: float) -> Node:
        return self.apply("scale", x, factor=float(factor))

    def sum(self, x: Node) -> Node:
        return self.apply("sum", x)

    def sq_norm(self, x: Node) -> Node:
        return self.apply("sq_norm", x)

    def replay(self, overrides: Optional[Dict[int, Tensor]] = None, output: Optional[Node] = None) -> Tensor:
        """Recompute the forward pass with some leaf values replaced.

        Args:
            overrides: Mapping of leaf index to replacement value (same shape)
            output: Node whose value to return (defaults to the last node)

        Returns:
            The recomputed value of ``output``
        """
        overrides = overrides or {}
        target = self._own(output) if output is not None else self.output
        values: List[Tensor] = []
        for node in self._nodes[:target.index + 1]:
            if node.is_leaf:
                value = as_tensor(overrides[node.index]) if node.index in overrides else node.value
                if value.shape != node.shape:
                    raise GraphError(f"Override for leaf {node.index} has shape {value.shape}, expected {node.shape}")
                values.append(value)
            else:
                primitive = get_primitive(node.op)
                values.append(np.asarray(
                    primitive.forward([values[i] for i in node.inputs], node.attrs), dtype=np.float64
                ))
        return values[target.index]

    def grad(self, wrt: Sequence[Node], output: Optional[Node] = None) -> List[Tensor]:
        return grad(self, wrt, output)


def grad(graph: Graph, wrt: Iterable[Node], output: Optional[Node] = None) -> List[Tensor]:
    """Gradients of a scalar graph output with respect to leaves.

    Args:
        graph: Recorded graph
        wrt: Leaf nodes to differentiate with respect to
        output: Scalar node (defaults to the last recorded node)

    Returns:
        One gradient per requested leaf, shaped like the leaf
    """
    wrt = [graph._own(node) for node in wrt]
    target = graph._own(output) if output is not None else graph.output
    if target.value.ndim != 0:
        raise NonScalarOutputError(f"Gradient requires a scalar output, got shape {target.shape}")
    for node in wrt:
        if not node.is_leaf:
            raise NotALeafError(f"Node {node.index} ({node.op}) is not a leaf")

    nodes = graph.nodes[:target.index + 1]
    requested = {node.index for node in wrt}
    needs = [False] * len(nodes)
    for node in nodes:
        needs[node.index] = node.index in requested if node.is_leaf else any(needs[i] for i in node.inputs)

    adjoints: Dict[int, Tensor] = {target.index: np.ones((), dtype=np.float64)}
    leaf_grads: Dict[int, Tensor] = {}
    for node in reversed(nodes):
        upstream = adjoints.pop(node.index, None)
        if upstream is None or not needs[node.index]:
            continue
        if node.is_leaf:
            leaf_grads[node.index] = upstream
            continue
        input_needs = [needs[i] for i in node.inputs]
        primitive = get_primitive(node.op)
        contributions = primitive.vjp(
            upstream, [nodes[i].value for i in node.inputs], node.value, node.attrs, input_needs
        )
        for index, contribution, need in zip(node.inputs, contributions, input_needs):
            if not need or contribution is None:
                continue
            if index in adjoints:
                adjoints[index] = adjoints[index] + contribution
            else:
                adjoints[index] = np.asarray(contribution, dtype=np.float64)

    return [
        np.array(leaf_grads[node.index], dtype=np.float64) if node.index in leaf_grads
        else np.zeros_like(node.value)
        for node in wrt
    ]
