from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ...enums import Mode, OmegaInit
from ...errors import ConfigError
from ..calib.models import CalibConfig
from ..confidence.models import ConfidenceMap, OmegaSettings
from ..partition.models import PartitionSettings
from ..segmodel.models import AdamState, ModelParams


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a training run; echoed verbatim into the output directory."""

    T: int = 20
    K: int = 1
    tau: float = 0.9
    alpha: float = 0.05
    eta: float = 0.1
    lr: float = 3e-4
    batch_size: int = 24
    patch_h: int = 16
    patch_w: int = 16
    bins: int = 32
    d: int = 8
    hidden: int = 8
    classes: int = 2
    seed: int = 0
    mode: Mode = Mode.DALE
    omega_init: OmegaInit = OmegaInit.ONES
    omega_max: float = 2.0
    warm_start: bool = True
    literal_masks: bool = False
    phase_epochs: int = 1
    pixel_cap: int = 256
    support_threshold: float = 0.01
    eps_max: float = 0.01
    ridge: float = 1e-6
    dice_loss: bool = False
    recompute_masks: bool = False
    use_entropy: bool = True
    use_edge: bool = True
    use_omega: bool = True
    use_alignment: bool = True
    save_omega: bool = True
    dump_calib: bool = False

    def __post_init__(self) -> None:
        positive = ("T", "K", "lr", "batch_size", "patch_h", "patch_w", "phase_epochs", "pixel_cap", "omega_max")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must be in (0, 1), got {self.tau}")
        if self.alpha < 0.0 or self.eta < 0.0 or self.eps_max < 0.0 or self.ridge < 0.0:
            raise ConfigError("alpha, eta, eps_max and ridge must be non-negative")
        if self.bins < 2 or self.d < 2 or self.hidden < 1 or self.classes < 2 or self.seed < 0:
            raise ConfigError(f"bins={self.bins}, d={self.d}, hidden={self.hidden}, classes={self.classes}")
        if not 0.0 <= self.support_threshold < 1.0:
            raise ConfigError(f"support_threshold must be in [0, 1), got {self.support_threshold}")
        if self.literal_masks and self.classes != 2:
            raise ConfigError("literal_masks needs two classes")
        if not (self.use_entropy or self.use_edge):
            raise ConfigError("use_entropy and use_edge cannot both be false")

    def partition_settings(self) -> PartitionSettings:
        return PartitionSettings(
            patch_h=self.patch_h,
            patch_w=self.patch_w,
            bins=self.bins,
            tau=self.tau,
            use_entropy=self.use_entropy,
            use_edge=self.use_edge,
        )

    def omega_settings(self) -> OmegaSettings:
        return OmegaSettings(
            K=self.K,
            eta=self.eta,
            omega_max=self.omega_max,
            omega_init=self.omega_init,
            inner_lr=self.lr,
            support_threshold=self.support_threshold,
            pixel_cap=self.pixel_cap,
            use_omega=self.use_omega,
        )

    def calib_config(self) -> CalibConfig:
        return CalibConfig(alpha=self.alpha, eps_max=self.eps_max, ridge=self.ridge, use_alignment=self.use_alignment)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["omega_init"] = self.omega_init.value
        return data

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown keys {unknown}")

        values = dict(data)
        try:
            if "mode" in values:
                values["mode"] = Mode(values["mode"])
            if "omega_init" in values:
                values["omega_init"] = OmegaInit(values["omega_init"])
        except ValueError as e:
            raise ConfigError(str(e)) from e

        return cls(**values)


@dataclass(frozen=True, eq=False)
class TrainState:
    params: ModelParams
    adam: AdamState
    t: int = 0
    steps: int = 0
    omegas: tuple[ConfidenceMap | None, ...] = ()
    history: tuple[dict[str, Any], ...] = field(default_factory=tuple)
