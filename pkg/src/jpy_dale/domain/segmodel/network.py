"""Tiny segmentation network and its losses.

conv 3x3 -> relu -> conv 3x3 -> relu gives the d-channel features; a 1x1 head
maps them to C logits. Every convolution uses zero "same" padding, so output
maps have the input's spatial size and each logit sees a 5x5 input window.

The base loss is pixel-weighted cross-entropy. ``normalized=True`` divides by
the total weight (reporting and phase training); ``normalized=False`` is the
plain weighted sum the confidence meta-step is derived for.
"""

import logging

import numpy as np
import numpy.typing as npt

from ...errors import BadRange, ShapeMismatch
from ..numkit.autodiff import Graph, Node, grad
from ..numkit.rng import Rng
from ..numkit.tensor import Tensor, one_hot
from .models import PARAM_NAMES, ForwardOut, ModelParams

logger = logging.getLogger("dale.segmodel.network")

# two stacked 3x3 convolutions
RECEPTIVE_RADIUS = 2
DICE_SMOOTHING = 1.0


def init(seed: int | Rng, d: int = 8, classes: int = 2, channels: int = 1, hidden: int = 8) -> ModelParams:
    """Weights ~ uniform(-s, s) with s = sqrt(1 / fan_in); biases zero."""
    if d < 2 or classes < 2 or channels < 1 or hidden < 1:
        raise BadRange(f"d={d}, classes={classes}, channels={channels}, hidden={hidden}")

    rng = seed if isinstance(seed, Rng) else Rng(seed)
    shapes = {
        "conv1.weight": (hidden, channels, 3, 3),
        "conv1.bias": (hidden,),
        "conv2.weight": (d, hidden, 3, 3),
        "conv2.bias": (d,),
        "head.weight": (classes, d, 1, 1),
        "head.bias": (classes,),
    }

    tensors = []
    for name in PARAM_NAMES:
        shape = shapes[name]
        if name.endswith(".bias"):
            tensors.append(np.zeros(shape))
            continue
        bound = np.sqrt(1.0 / int(np.prod(shape[1:])))
        tensors.append(rng.split("init", name).uniform_array(-bound, bound, shape))

    params = ModelParams(tensors=tuple(tensors))
    logger.debug("Initialized model with %d parameters (d=%d, C=%d)", params.size, d, classes)
    return params


def bind(graph: Graph, params: ModelParams) -> list[Node]:
    return [graph.parameter(tensor, name=name) for name, tensor in params.items()]


def build_forward(graph: Graph, nodes: list[Node], image: Tensor) -> tuple[Node, Node]:
    """Record the forward pass of ``image`` (channels, H, W); returns (logits, features)."""
    w1, b1, w2, b2, wh, bh = nodes
    if image.ndim != 3 or image.shape[0] != w1.shape[1]:
        raise ShapeMismatch(f"image {image.shape} for {w1.shape[1]} input channels")

    x = graph.constant(image)
    hidden = graph.relu(graph.conv2d(x, w1, b1))
    features = graph.relu(graph.conv2d(hidden, w2, b2))
    logits = graph.conv2d(features, wh, bh)
    return logits, features


def forward(params: ModelParams, image: Tensor) -> ForwardOut:
    """Logits (C, H, W) and pre-head features (d, H, W) of ``image``.

    ``image`` may be (H, W) for single-channel input.
    """
    x = image[None] if image.ndim == 2 else image
    graph = Graph()
    logits, features = build_forward(graph, bind(graph, params), x)
    return ForwardOut(logits=logits.value, features=features.value)


def targets_for(label: npt.NDArray[np.integer], classes: int) -> Tensor:
    return one_hot(label, classes)


def log_softmax(logits: Tensor) -> Tensor:
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def ce_map(logits: Tensor, targets: Tensor) -> Tensor:
    """Per-pixel cross-entropy (H, W) against one-hot or soft ``targets`` (C, H, W)."""
    if logits.shape != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    return -np.sum(targets * log_softmax(logits), axis=0)


def seg_loss(
    logits: Tensor,
    label: npt.NDArray[np.integer],
    pixel_weights: Tensor,
    normalized: bool = True,
) -> float:
    """Pixel-weighted cross-entropy; zero total weight gives 0."""
    if pixel_weights.shape != label.shape or logits.shape[1:] != label.shape:
        raise ShapeMismatch(f"logits {logits.shape}, label {label.shape}, weights {pixel_weights.shape}")
    if np.any(pixel_weights < 0.0):
        raise BadRange("pixel weights must be non-negative")

    total = float(pixel_weights.sum())
    if total == 0.0:
        return 0.0

    weighted = float(np.sum(pixel_weights * ce_map(logits, targets_for(label, logits.shape[0]))))
    return weighted / total if normalized else weighted


def seg_loss_node(graph: Graph, logits: Node, targets: Tensor, weights: Tensor) -> Node:
    """Unnormalized ``sum_k w_k * CE_k`` recorded on ``graph``."""
    if targets.shape != logits.shape or weights.shape != logits.shape[1:]:
        raise ShapeMismatch(f"logits {logits.shape}, targets {targets.shape}, weights {weights.shape}")

    log_probs = graph.log(graph.softmax(logits))
    return graph.sum(graph.weight(log_probs, -targets * weights[None]))


def log_dice_node(graph: Graph, logits: Node, targets: Tensor, weights: Tensor) -> Node:
    """Mean over foreground classes of ``-log`` smoothed soft Dice."""
    probs = graph.softmax(logits)
    classes = logits.shape[0]

    terms = []
    for c in range(1, classes):
        select = np.zeros(logits.shape)
        select[c] = weights
        overlap = graph.weight(graph.sum(graph.weight(probs, select * targets)), 2.0)
        mass = graph.sum(graph.weight(probs, select))
        target_mass = float(np.sum(weights * targets[c]))

        numerator = graph.log(graph.add(overlap, graph.constant(DICE_SMOOTHING)))
        denominator = graph.log(graph.add(mass, graph.constant(target_mass + DICE_SMOOTHING)))
        terms.append(graph.sub(denominator, numerator))

    total = terms[0]
    for term in terms[1:]:
        total = graph.add(total, term)
    return graph.weight(total, 1.0 / len(terms))


def loss_and_grads(
    params: ModelParams,
    image: Tensor,
    targets: Tensor,
    weights: Tensor,
    normalized: bool = True,
) -> tuple[float, list[Tensor]]:
    """Weighted CE of one image and its parameter gradients."""
    graph = Graph()
    nodes = bind(graph, params)
    logits, _ = build_forward(graph, nodes, image)

    loss = seg_loss_node(graph, logits, targets, weights)
    total = float(weights.sum())
    if normalized and total > 0.0:
        loss = graph.weight(loss, 1.0 / total)

    return float(loss.value), grad(graph, loss, nodes)


def pixel_window(image: Tensor, y: int, x: int) -> tuple[Tensor, Tensor]:
    """Zero-padded 5x5 input crop centred on (y, x) and the in-image validity mask of that crop."""
    r = RECEPTIVE_RADIUS
    height, width = image.shape[1:]
    padded = np.pad(image, ((0, 0), (r, r), (r, r)))
    crop = padded[:, y : y + 2 * r + 1, x : x + 2 * r + 1]

    rows = np.arange(y - r, y + r + 1)
    cols = np.arange(x - r, x + r + 1)
    valid = ((rows >= 0) & (rows < height))[:, None] & ((cols >= 0) & (cols < width))[None, :]
    return crop, valid.astype(np.float64)


def pixel_loss_and_grads(
    params: ModelParams, image: Tensor, targets: Tensor, y: int, x: int
) -> tuple[float, list[Tensor]]:
    """Single-pixel CE at (y, x) and its exact parameter gradient.

    The forward pass runs on the 5x5 receptive window only. Hidden activations
    outside the image are zeroed so the result equals the full-image pass.
    """
    r = RECEPTIVE_RADIUS
    crop, valid = pixel_window(image, y, x)

    graph = Graph()
    w1, b1, w2, b2, wh, bh = nodes = bind(graph, params)
    hidden = graph.weight(graph.relu(graph.conv2d(graph.constant(crop), w1, b1)), valid[None])
    features = graph.relu(graph.conv2d(hidden, w2, b2))
    logits = graph.conv2d(features, wh, bh)

    centre = np.zeros(logits.shape)
    centre[:, r, r] = -targets[:, y, x]
    loss = graph.sum(graph.weight(graph.log(graph.softmax(logits)), centre))
    return float(loss.value), grad(graph, loss, nodes)
