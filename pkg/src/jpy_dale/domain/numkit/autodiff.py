"""Reverse-mode differentiation over a recorded operation graph.

A ``Graph`` records every operation as an immutable ``Node`` holding its kind,
its input node ids and the cached forward value. Recording order is a valid
evaluation order, so reverse accumulation walks the node list backwards.

The op set is fixed: add, sub, mul, matmul, 2-D convolution (stride 1, zero
"same" padding, odd kernels), relu, sigmoid, softmax over the leading channel
axis, log, sum, mean and weighting by a constant array.

Example:
    ```python
    graph = Graph()
    theta = graph.parameter(np.array([1.0, 2.0]))
    loss = graph.sum(graph.mul(theta, theta))
    (gradient,) = grad(graph, loss, [theta])  # -> [2.0, 4.0]
    ```
"""

import logging
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, final

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ...enums import OpKind
from ...errors import DetachedNode, NotScalarLoss, ShapeMismatch
from .tensor import Tensor, ensure_finite

logger = logging.getLogger("dale.numkit.autodiff")

# log() evaluates at max(x, _LOG_FLOOR) so saturated probabilities stay finite
_LOG_FLOOR = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class Node:
    id: int
    kind: OpKind
    inputs: tuple[int, ...]
    value: Tensor
    graph_uid: str
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)


@final
class Graph:
    def __init__(self) -> None:
        self.uid = uuid.uuid4().hex
        self._nodes: list[Node] = []

    @property
    def nodes(self) -> tuple[Node, ...]:
        return tuple(self._nodes)

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(
        self,
        kind: OpKind,
        inputs: Sequence[Node],
        value: Any,
        attrs: dict[str, Any] | None = None,
        name: str = "",
    ) -> Node:
        for node in inputs:
            self._check_owned(node)

        tensor = ensure_finite(np.asarray(value, dtype=np.float64), kind.value)
        node = Node(
            id=len(self._nodes),
            kind=kind,
            inputs=tuple(node.id for node in inputs),
            value=tensor,
            graph_uid=self.uid,
            attrs=attrs or {},
            name=name,
        )
        self._nodes.append(node)
        return node

    def _check_owned(self, node: Node) -> None:
        if node.graph_uid != self.uid or node.id >= len(self._nodes) or self._nodes[node.id] is not node:
            logger.error("Node %d (%s) is not recorded on graph %s", node.id, node.kind.value, self.uid)
            raise DetachedNode(f"node {node.id} ({node.kind.value})")

    # leaves

    def parameter(self, value: Any, name: str = "") -> Node:
        return self._record(OpKind.PARAMETER, (), np.array(value, dtype=np.float64), name=name)

    def constant(self, value: Any, name: str = "") -> Node:
        return self._record(OpKind.CONSTANT, (), np.array(value, dtype=np.float64), name=name)

    # arithmetic

    def add(self, a: Node, b: Node) -> Node:
        return self._record(OpKind.ADD, (a, b), a.value + b.value)

    def sub(self, a: Node, b: Node) -> Node:
        return self._record(OpKind.SUB, (a, b), a.value - b.value)

    def mul(self, a: Node, b: Node) -> Node:
        return self._record(OpKind.MUL, (a, b), a.value * b.value)

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim not in (1, 2) or a.value.shape[1] != b.value.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        return self._record(OpKind.MATMUL, (a, b), a.value @ b.value)

    def conv2d(self, x: Node, weight: Node, bias: Node | None = None) -> Node:
        """x (Cin, H, W) * weight (Cout, Cin, kh, kw) [+ bias (Cout,)] -> (Cout, H, W)."""
        if x.value.ndim != 3 or weight.value.ndim != 4 or weight.value.shape[1] != x.value.shape[0]:
            raise ShapeMismatch(f"conv2d input {x.shape} with weight {weight.shape}")
        kh, kw = weight.value.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeMismatch(f"conv2d needs odd kernels, got {kh}x{kw}")
        if bias is not None and bias.value.shape != (weight.value.shape[0],):
            raise ShapeMismatch(f"conv2d bias {bias.shape} for {weight.value.shape[0]} channels")

        out = np.einsum("ihwab,oiab->ohw", _windows(x.value, kh, kw), weight.value, optimize=True)
        inputs: tuple[Node, ...] = (x, weight)
        if bias is not None:
            out = out + bias.value[:, None, None]
            inputs = (x, weight, bias)
        return self._record(OpKind.CONV2D, inputs, out)

    def relu(self, x: Node) -> Node:
        return self._record(OpKind.RELU, (x,), np.maximum(x.value, 0.0))

    def sigmoid(self, x: Node) -> Node:
        return self._record(OpKind.SIGMOID, (x,), 0.5 * (1.0 + np.tanh(0.5 * x.value)))

    def softmax(self, x: Node) -> Node:
        """Softmax over the leading (channel) axis."""
        shifted = x.value - x.value.max(axis=0, keepdims=True)
        exp = np.exp(shifted)
        return self._record(OpKind.SOFTMAX, (x,), exp / exp.sum(axis=0, keepdims=True))

    def log(self, x: Node) -> Node:
        return self._record(OpKind.LOG, (x,), np.log(np.maximum(x.value, _LOG_FLOOR)))

    def sum(self, x: Node) -> Node:
        return self._record(OpKind.SUM, (x,), np.sum(x.value))

    def mean(self, x: Node) -> Node:
        if x.value.size == 0:
            raise ShapeMismatch("mean of an empty tensor")
        return self._record(OpKind.MEAN, (x,), np.mean(x.value))

    def weight(self, x: Node, weights: Any) -> Node:
        """Elementwise product with a constant array (or scalar); no gradient flows to ``weights``."""
        w = np.asarray(weights, dtype=np.float64)
        try:
            np.broadcast_shapes(w.shape, x.value.shape)
        except ValueError as e:
            raise ShapeMismatch(f"weights {w.shape} for {x.shape}") from e
        if np.broadcast_shapes(w.shape, x.value.shape) != x.value.shape:
            raise ShapeMismatch(f"weights {w.shape} would broadcast {x.shape}")
        ensure_finite(w, "weight")
        return self._record(OpKind.WEIGHT, (x,), x.value * w, attrs={"weights": w})


def _windows(x: Tensor, kh: int, kw: int) -> Tensor:
    """Zero-padded sliding windows (Cin, H, W, kh, kw) of x (Cin, H, W)."""
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    return sliding_window_view(padded, (kh, kw), axis=(1, 2))


def _unbroadcast(gradient: Tensor, shape: tuple[int, ...]) -> Tensor:
    while gradient.ndim > len(shape):
        gradient = gradient.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and gradient.shape[axis] != 1:
            gradient = gradient.sum(axis=axis, keepdims=True)
    return gradient


VjpRule = Callable[[Node, list[Tensor], Tensor], tuple[Tensor, ...]]
_VJP_RULES: dict[OpKind, VjpRule] = {}


def _rule(kind: OpKind) -> Callable[[VjpRule], VjpRule]:
    def register(rule: VjpRule) -> VjpRule:
        _VJP_RULES[kind] = rule
        return rule

    return register


@_rule(OpKind.ADD)
def _vjp_add(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return _unbroadcast(g, xs[0].shape), _unbroadcast(g, xs[1].shape)


@_rule(OpKind.SUB)
def _vjp_sub(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return _unbroadcast(g, xs[0].shape), _unbroadcast(-g, xs[1].shape)


@_rule(OpKind.MUL)
def _vjp_mul(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return _unbroadcast(g * xs[1], xs[0].shape), _unbroadcast(g * xs[0], xs[1].shape)


@_rule(OpKind.MATMUL)
def _vjp_matmul(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    a, b = xs
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


@_rule(OpKind.CONV2D)
def _vjp_conv2d(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    x, weight = xs[0], xs[1]
    kh, kw = weight.shape[2:]
    ph, pw = kh // 2, kw // 2
    height, width = x.shape[1:]

    g_weight = np.einsum("ohw,ihwab->oiab", g, _windows(x, kh, kw), optimize=True)

    g_padded = np.zeros((x.shape[0], height + 2 * ph, width + 2 * pw))
    for a in range(kh):
        for b in range(kw):
            g_padded[:, a : a + height, b : b + width] += np.einsum("oi,ohw->ihw", weight[:, :, a, b], g)
    g_x = g_padded[:, ph : ph + height, pw : pw + width]

    if len(xs) == 3:
        return g_x, g_weight, g.sum(axis=(1, 2))
    return g_x, g_weight


@_rule(OpKind.RELU)
def _vjp_relu(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return (g * (xs[0] > 0.0),)


@_rule(OpKind.SIGMOID)
def _vjp_sigmoid(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    s = node.value
    return (g * s * (1.0 - s),)


@_rule(OpKind.SOFTMAX)
def _vjp_softmax(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    s = node.value
    return (s * (g - np.sum(g * s, axis=0, keepdims=True)),)


@_rule(OpKind.LOG)
def _vjp_log(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return (g / np.maximum(xs[0], _LOG_FLOOR),)


@_rule(OpKind.SUM)
def _vjp_sum(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return (np.full(xs[0].shape, float(g)),)


@_rule(OpKind.MEAN)
def _vjp_mean(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return (np.full(xs[0].shape, float(g) / xs[0].size),)


@_rule(OpKind.WEIGHT)
def _vjp_weight(node: Node, xs: list[Tensor], g: Tensor) -> tuple[Tensor, ...]:
    return (g * node.attrs["weights"],)


def grad(graph: Graph, loss: Node, wrt: Iterable[Node]) -> list[Tensor]:
    """Gradients of the scalar ``loss`` with respect to each node in ``wrt``.

    Nodes the loss does not depend on receive a zero gradient of their own shape.

    Raises:
        NotScalarLoss: If the loss value is not 0-dimensional
        DetachedNode: If ``loss`` or any ``wrt`` node was recorded on another graph
    """
    targets = list(wrt)
    graph._check_owned(loss)
    for node in targets:
        graph._check_owned(node)

    if loss.value.ndim != 0:
        logger.error("grad called on non-scalar node of shape %s", loss.shape)
        raise NotScalarLoss(f"loss shape {loss.shape}")

    nodes = graph.nodes
    adjoints: dict[int, Tensor] = {loss.id: np.ones(())}

    for node in reversed(nodes[: loss.id + 1]):
        g = adjoints.get(node.id)
        if g is None or not node.inputs:
            continue

        inputs = [nodes[i].value for i in node.inputs]
        for input_id, contribution in zip(node.inputs, _VJP_RULES[node.kind](node, inputs, g)):
            if input_id in adjoints:
                adjoints[input_id] = adjoints[input_id] + contribution
            else:
                adjoints[input_id] = contribution

    gradients = []
    for node in targets:
        gradient = adjoints.get(node.id)
        gradients.append(np.zeros(node.shape) if gradient is None else ensure_finite(gradient, "grad"))

    logger.debug("Reverse pass over %d nodes for %d targets", loss.id + 1, len(targets))
    return gradients
