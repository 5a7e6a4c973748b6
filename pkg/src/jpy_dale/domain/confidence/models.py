from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from ...enums import OmegaInit
from ...errors import BadRange, ShapeMismatch
from ..numkit.tensor import Tensor
from ..segmodel.models import ModelParams


@dataclass(frozen=True)
class OmegaSettings:
    K: int = 1
    eta: float = 0.1
    omega_max: float = 2.0
    omega_init: OmegaInit = OmegaInit.ONES
    inner_lr: float = 3e-4
    support_threshold: float = 0.01
    pixel_cap: int = 256
    use_omega: bool = True

    def __post_init__(self) -> None:
        if self.K < 1 or self.pixel_cap < 1:
            raise BadRange(f"K={self.K}, pixel_cap={self.pixel_cap}")
        if self.eta < 0.0 or self.omega_max <= 0.0 or self.inner_lr <= 0.0:
            raise BadRange(f"eta={self.eta}, omega_max={self.omega_max}, inner_lr={self.inner_lr}")

    @property
    def omega0(self) -> float:
        return self.eta if self.omega_init is OmegaInit.ETA else 1.0


@dataclass(frozen=True, eq=False)
class ConfidenceMap:
    """Per-pixel label confidence of one image.

    ``grad_omega`` is the meta-gradient summed over the rounds of the latest
    loop; it is only meaningful where ``evaluated`` is set.
    """

    omega: Tensor
    eta: float
    omega_max: float
    support: npt.NDArray[np.bool_]
    evaluated: npt.NDArray[np.bool_]
    grad_omega: Tensor | None = None

    def __post_init__(self) -> None:
        if self.support.shape != self.omega.shape or self.evaluated.shape != self.omega.shape:
            raise ShapeMismatch(f"omega {self.omega.shape}, support {self.support.shape}")
        if self.grad_omega is not None and self.grad_omega.shape != self.omega.shape:
            raise ShapeMismatch(f"grad_omega {self.grad_omega.shape} for omega {self.omega.shape}")
        if np.any(self.omega < 0.0) or np.any(self.omega > self.omega_max):
            raise BadRange(f"omega outside [0, {self.omega_max}]")

    @classmethod
    def initial(cls, shape: tuple[int, int], settings: OmegaSettings) -> "ConfidenceMap":
        return cls(
            omega=np.full(shape, settings.omega0),
            eta=settings.eta,
            omega_max=settings.omega_max,
            support=np.zeros(shape, dtype=bool),
            evaluated=np.zeros(shape, dtype=bool),
        )


@dataclass(frozen=True, eq=False)
class ShadowModel:
    params: ModelParams
    t: int = 0
