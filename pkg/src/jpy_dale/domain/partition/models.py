from dataclasses import dataclass
from typing import Any

import numpy as np

from ...enums import Region
from ...errors import BadPatchSize, BadRange
from ..dataio.models import Sample
from ..numkit.tensor import Tensor


@dataclass(frozen=True)
class PartitionSettings:
    patch_h: int = 16
    patch_w: int = 16
    bins: int = 32
    tau: float = 0.9
    use_entropy: bool = True
    use_edge: bool = True

    def __post_init__(self) -> None:
        if self.patch_h < 1 or self.patch_w < 1:
            raise BadPatchSize(f"{self.patch_h}x{self.patch_w}")
        if self.bins < 2:
            raise BadRange(f"bins must be >= 2, got {self.bins}")
        if not 0.0 < self.tau < 1.0:
            raise BadRange(f"tau must be in (0, 1), got {self.tau}")
        if not (self.use_entropy or self.use_edge):
            raise BadRange("at least one of entropy or edge scoring must be enabled")


@dataclass(frozen=True, eq=False)
class PatchScores:
    """Per-patch scores in row-major patch-grid order."""

    grid: tuple[int, int]
    r: Tensor
    e: Tensor
    r_std: Tensor
    e_std: Tensor
    m: Tensor

    @property
    def count(self) -> int:
        return int(self.m.size)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": list(self.grid),
            "r": self.r.tolist(),
            "e": self.e.tolist(),
            "m": self.m.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SoftMasks:
    fuzzy: Tensor
    nonfuzzy: Tensor
    tau: float


@dataclass(frozen=True, eq=False)
class RegionSample:
    base: Sample
    scores: PatchScores
    masks: SoftMasks
    patch: tuple[int, int]

    def weights(self, region: Region) -> Tensor:
        """Per-pixel loss weights of ``region``."""
        return self.masks.fuzzy if region is Region.FUZZY else self.masks.nonfuzzy

    def masked_image(self, region: Region) -> Tensor:
        """``M * X`` for the literal elementwise-product mode, shape (channels, H, W)."""
        return self.base.channels_first() * self.weights(region)[None]

    def support(self, region: Region, threshold: float = 0.0) -> np.ndarray:
        return self.weights(region) > threshold
