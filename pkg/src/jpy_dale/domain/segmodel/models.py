from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ...errors import ShapeMismatch
from ..numkit.tensor import Tensor, ensure_finite

PARAM_NAMES: tuple[str, ...] = (
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "head.weight",
    "head.bias",
)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Named parameter tensors in fixed order.

    conv1 (hidden, channels, 3, 3), conv2 (d, hidden, 3, 3), head (C, d, 1, 1),
    each followed by its bias.
    """

    tensors: tuple[Tensor, ...]
    names: tuple[str, ...] = PARAM_NAMES

    def __post_init__(self) -> None:
        if len(self.tensors) != len(self.names):
            raise ShapeMismatch(f"{len(self.tensors)} tensors for {len(self.names)} names")
        for name, tensor in zip(self.names, self.tensors):
            ensure_finite(tensor, name)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[self.names.index(name)]

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return zip(self.names, self.tensors)

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(t.shape) for t in self.tensors)

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors)

    @property
    def channels(self) -> int:
        return int(self["conv1.weight"].shape[1])

    @property
    def hidden(self) -> int:
        return int(self["conv1.weight"].shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self["conv2.weight"].shape[0])

    @property
    def classes(self) -> int:
        return int(self["head.weight"].shape[0])

    def map(self, fn: Callable[[Tensor], Tensor]) -> "ModelParams":
        return ModelParams(tensors=tuple(fn(t) for t in self.tensors), names=self.names)

    def zip_map(self, other: "Grads", fn: Callable[[Tensor, Tensor], Tensor]) -> "ModelParams":
        if len(other) != len(self.tensors):
            raise ShapeMismatch(f"{len(other)} gradients for {len(self.tensors)} parameters")
        for tensor, gradient in zip(self.tensors, other):
            if tensor.shape != gradient.shape:
                raise ShapeMismatch(f"gradient {gradient.shape} for parameter {tensor.shape}")
        return ModelParams(tensors=tuple(fn(t, g) for t, g in zip(self.tensors, other)), names=self.names)

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def flat(self) -> Tensor:
        return np.concatenate([t.reshape(-1) for t in self.tensors])

    def unflat(self, vector: Tensor) -> "ModelParams":
        if vector.size != self.size:
            raise ShapeMismatch(f"vector of {vector.size} for {self.size} parameters")
        tensors, offset = [], 0
        for t in self.tensors:
            tensors.append(np.array(vector[offset : offset + t.size]).reshape(t.shape))
            offset += t.size
        return ModelParams(tensors=tuple(tensors), names=self.names)


Grads = tuple[Tensor, ...] | list[Tensor]


def flatten_grads(grads: Grads) -> Tensor:
    return np.concatenate([g.reshape(-1) for g in grads])


@dataclass(frozen=True, eq=False)
class ForwardOut:
    logits: Tensor
    features: Tensor

    @property
    def prediction(self) -> np.ndarray:
        return np.argmax(self.logits, axis=0)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple[Tensor, ...]
    v: tuple[Tensor, ...]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, lr: float = 3e-4) -> "AdamState":
        zeros = tuple(np.zeros_like(t) for t in params)
        return cls(m=zeros, v=tuple(np.zeros_like(t) for t in params), lr=lr)


@dataclass(frozen=True, eq=False)
class WeightedImage:
    """Network input (channels, H, W), targets (C, H, W) and per-pixel loss weights (H, W)."""

    image: Tensor
    targets: Tensor
    weights: Tensor

    def __post_init__(self) -> None:
        if self.image.shape[1:] != self.weights.shape or self.targets.shape[1:] != self.weights.shape:
            raise ShapeMismatch(f"image {self.image.shape}, targets {self.targets.shape}, weights {self.weights.shape}")
