from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from ...enums import NoiseModel, Split
from ...errors import BadDims, EmptySplit, ShapeMismatch

MIN_SIDE = 8
MAX_SIDE = 256


@dataclass(frozen=True, eq=False)
class Sample:
    """One image with its (possibly noisy) label and the generator ground truth.

    ``image`` is (H, W) for single-channel data and (channels, H, W) otherwise.
    """

    image: npt.NDArray[np.float64]
    label: npt.NDArray[np.int64]
    clean_label: npt.NDArray[np.int64]
    noise_mask: npt.NDArray[np.bool_]

    def __post_init__(self) -> None:
        shape = self.label.shape
        if self.image.shape[-2:] != shape or self.clean_label.shape != shape or self.noise_mask.shape != shape:
            raise ShapeMismatch(
                f"image {self.image.shape}, label {shape}, clean {self.clean_label.shape}, "
                f"noise {self.noise_mask.shape}"
            )
        if self.image.ndim not in (2, 3):
            raise ShapeMismatch(f"image must be (H, W) or (C, H, W), got {self.image.shape}")
        if not np.array_equal(self.noise_mask, self.label != self.clean_label):
            raise ShapeMismatch("noise_mask does not mark exactly the corrupted pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.label.shape[0]), int(self.label.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.image.ndim == 2 else int(self.image.shape[0])

    def channels_first(self) -> npt.NDArray[np.float64]:
        """Image as (channels, H, W), the layout the network consumes."""
        return self.image[None] if self.image.ndim == 2 else self.image

    def intensity(self) -> npt.NDArray[np.float64]:
        """Channel mean, the map entropy is scored on."""
        return self.image if self.image.ndim == 2 else self.image.mean(axis=0)


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 200
    n_test: int = 50
    height: int = 32
    width: int = 32
    blur_sigma: float = 3.0
    noise_rate: float = 0.3
    band: int = 2
    noise_model: NoiseModel = NoiseModel.BAND
    classes: int = 2
    channels: int = 1
    texture: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        for side in (self.height, self.width):
            if not MIN_SIDE <= side <= MAX_SIDE:
                raise BadDims(f"{self.height}x{self.width}, each side must be in [{MIN_SIDE}, {MAX_SIDE}]")
        if self.n < 1 or self.n_test < 0:
            raise BadDims(f"n={self.n}, n_test={self.n_test}")
        if not 0.0 <= self.noise_rate <= 1.0 or self.band < 1 or self.blur_sigma < 0.0:
            raise BadDims(f"noise_rate={self.noise_rate}, band={self.band}, blur_sigma={self.blur_sigma}")
        if self.classes < 2 or self.channels < 1 or self.texture < 0.0:
            raise BadDims(f"classes={self.classes}, channels={self.channels}, texture={self.texture}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["noise_model"] = self.noise_model.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GeneratorConfig":
        values = dict(data)
        if "noise_model" in values:
            values["noise_model"] = NoiseModel(values["noise_model"])
        return cls(**values)


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    label: str
    split: Split
    clean_label: str | None = None
    noise_mask: str | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"image": self.image, "label": self.label, "split": self.split.value}
        if self.clean_label is not None:
            data["clean_label"] = self.clean_label
        if self.noise_mask is not None:
            data["noise_mask"] = self.noise_mask
        return data


@dataclass(frozen=True)
class Manifest:
    height: int
    width: int
    classes: int
    entries: tuple[ManifestEntry, ...]
    channels: int = 1
    generator: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "width": self.width,
            "classes": self.classes,
            "channels": self.channels,
            "entries": [entry.to_dict() for entry in self.entries],
            "generator": self.generator,
        }


@dataclass(frozen=True)
class Dataset:
    manifest: Manifest
    samples: tuple[Sample, ...]
    splits: tuple[Split, ...]

    @property
    def classes(self) -> int:
        return self.manifest.classes

    def split(self, split: Split) -> list[Sample]:
        selected = [sample for sample, tag in zip(self.samples, self.splits) if tag == split]
        if not selected:
            raise EmptySplit(split.value)
        return selected

    @classmethod
    def in_memory(
        cls, train: list[Sample], test: list[Sample], classes: int, generator: dict[str, Any] | None = None
    ) -> "Dataset":
        first = (train or test)[0]
        manifest = Manifest(
            height=first.shape[0],
            width=first.shape[1],
            classes=classes,
            entries=(),
            channels=first.channels,
            generator=generator or {},
        )
        return cls(
            manifest=manifest,
            samples=tuple(train) + tuple(test),
            splits=(Split.TRAIN,) * len(train) + (Split.TEST,) * len(test),
        )
