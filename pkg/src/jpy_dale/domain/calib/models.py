from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from ...errors import BadRange, ShapeMismatch
from ..numkit.linalg import sym_eig
from ..numkit.tensor import Tensor


@dataclass(frozen=True)
class CalibConfig:
    alpha: float = 0.05
    eps_max: float = 0.01
    ridge: float = 1e-6
    min_count: int | None = None
    use_alignment: bool = True

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.eps_max < 0.0 or self.ridge < 0.0:
            raise BadRange(f"alpha={self.alpha}, eps_max={self.eps_max}, ridge={self.ridge}")

    def floor(self, d: int) -> int:
        """Pixels a class needs for a usable estimate; ``d + 1`` unless configured."""
        return d + 1 if self.min_count is None else self.min_count


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Feature rows (n, d) kept for statistics, with their labels and weights."""

    rows: Tensor
    labels: npt.NDArray[np.int64]
    weights: Tensor

    def __post_init__(self) -> None:
        n = self.rows.shape[0]
        if self.rows.ndim != 2 or self.labels.shape != (n,) or self.weights.shape != (n,):
            raise ShapeMismatch(f"rows {self.rows.shape}, labels {self.labels.shape}, weights {self.weights.shape}")

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])


@dataclass(frozen=True, eq=False)
class ClassGaussian:
    c: int
    mean: Tensor
    cov: Tensor
    count: int
    usable: bool
    epsilon: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        eigenvalues, _ = sym_eig(self.cov)
        return {
            "class": self.c,
            "mu": [float(v) for v in self.mean],
            "cov_eigenvalues": [float(v) for v in eigenvalues],
            "count": self.count,
            "usable": self.usable,
            "epsilon": self.epsilon,
        }
