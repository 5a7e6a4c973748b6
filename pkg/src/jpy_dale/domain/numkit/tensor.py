import logging
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt

from ...errors import NonFiniteValue, ShapeMismatch

logger = logging.getLogger("dale.numkit.tensor")

Tensor: TypeAlias = npt.NDArray[np.float64]


def as_tensor(values: Any, shape: tuple[int, ...] | None = None) -> Tensor:
    """Return a float64 copy of ``values``, optionally checked against ``shape``."""
    tensor = np.array(values, dtype=np.float64)

    if shape is not None and tensor.shape != tuple(shape):
        logger.error("Tensor shape %s does not match %s", tensor.shape, shape)
        raise ShapeMismatch(f"expected {tuple(shape)}, got {tensor.shape}")

    return ensure_finite(tensor, "as_tensor")


def ensure_finite(tensor: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(tensor)):
        logger.error("Non-finite value produced by %s", where)
        raise NonFiniteValue(where)

    return tensor


def one_hot(labels: npt.NDArray[np.integer], classes: int) -> Tensor:
    """Class-index map (H, W) -> one-hot targets (C, H, W)."""
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeMismatch(f"labels outside 0..{classes - 1}")

    return (np.arange(classes)[:, None, None] == labels[None, :, :]).astype(np.float64)
