from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import numpy.typing as npt


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    """Boundary pixel coordinates (n, 2) of a binary mask."""

    points: npt.NDArray[np.int64]

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def empty(self) -> bool:
        return len(self) == 0


@dataclass(frozen=True)
class MetricRow:
    Dice: float
    mIoU: float
    HD95: float
    ASD: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
