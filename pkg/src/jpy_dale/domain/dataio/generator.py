"""Synthetic lesion dataset with controllable boundary blur and label noise.

Each sample holds one to three wobbly blobs (class 1, or 1..C-1 for C > 2) on a
textured background (class 0). The clean label is the unblurred blob mask; the
image is the label's intensity levels blurred with a Gaussian of width
``blur_sigma`` plus smoothed texture noise, clipped to [0, 1] and quantized to
8 bits so that PGM storage is lossless.
"""

import logging

import numpy as np
import numpy.typing as npt
from scipy import ndimage

from ...enums import NoiseModel, Split
from ...errors import BadDims, BadRange
from ..numkit.rng import Rng
from .models import MAX_SIDE, MIN_SIDE, GeneratorConfig, Sample

logger = logging.getLogger("dale.dataio.generator")

_FOUR_NEIGHBOURS = ndimage.generate_binary_structure(2, 1)


def class_boundary(label: npt.NDArray[np.integer]) -> npt.NDArray[np.bool_]:
    """Pixels with at least one in-image 4-neighbour of a different class."""
    edge = np.zeros(label.shape, dtype=bool)

    vertical = label[1:, :] != label[:-1, :]
    edge[1:, :] |= vertical
    edge[:-1, :] |= vertical

    horizontal = label[:, 1:] != label[:, :-1]
    edge[:, 1:] |= horizontal
    edge[:, :-1] |= horizontal

    return edge


def boundary_band(label: npt.NDArray[np.integer], band: int) -> npt.NDArray[np.bool_]:
    """Pixels within ``band - 1`` city-block steps of the class boundary."""
    if band < 1:
        raise BadRange(f"band must be >= 1, got {band}")

    edge = class_boundary(label)
    if band == 1 or not edge.any():
        return edge
    return ndimage.binary_dilation(edge, structure=_FOUR_NEIGHBOURS, iterations=band - 1)


def _blob_mask(rng: Rng, h: int, w: int) -> npt.NDArray[np.bool_]:
    side = min(h, w)
    r_min = max(1.0, 0.1 * side)
    r_max = max(r_min + 1.0, 0.25 * side)

    cy = rng.uniform(0.2 * h, 0.8 * h)
    cx = rng.uniform(0.2 * w, 0.8 * w)
    radius = rng.uniform(r_min, r_max)
    wobble = rng.uniform(0.0, 0.25)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    harmonic = rng.integers(2, 5)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    boundary = radius * (1.0 + wobble * np.sin(harmonic * np.arctan2(dy, dx) + phase))
    mask = np.hypot(dy, dx) <= boundary
    mask[min(int(cy), h - 1), min(int(cx), w - 1)] = True
    return mask


def _render(
    rng: Rng, clean: npt.NDArray[np.int64], classes: int, blur_sigma: float, texture: float, channels: int
) -> npt.NDArray[np.float64]:
    levels = np.empty(classes)
    levels[0] = rng.uniform(0.15, 0.35)
    for c in range(1, classes):
        levels[c] = rng.uniform(0.55, 0.8)

    base = levels[clean]
    if blur_sigma > 0.0:
        base = ndimage.gaussian_filter(base, sigma=blur_sigma, mode="nearest")

    planes = []
    for channel in range(channels):
        noise = ndimage.gaussian_filter(rng.split("texture", channel).normal(clean.shape), sigma=1.0, mode="reflect")
        plane = np.clip(base + texture * noise, 0.0, 1.0)
        planes.append(np.floor(plane * 255.0 + 0.5) / 255.0)

    return planes[0] if channels == 1 else np.stack(planes)


def gen_synthetic(
    n: int,
    h: int,
    w: int,
    blur_sigma: float,
    seed: int,
    classes: int = 2,
    channels: int = 1,
    texture: float = 0.05,
    stream: str = Split.TRAIN.value,
) -> list[Sample]:
    """Generate ``n`` clean samples; fully determined by ``(seed, stream)``.

    Raises:
        BadDims: If a side is outside [8, 256] or n < 1
    """
    if not (MIN_SIDE <= h <= MAX_SIDE and MIN_SIDE <= w <= MAX_SIDE) or n < 1:
        logger.error("Rejected generator dims n=%d h=%d w=%d", n, h, w)
        raise BadDims(f"n={n}, {h}x{w}")

    root = Rng(seed)
    samples = []
    for index in range(n):
        rng = root.split(stream, index)

        clean = np.zeros((h, w), dtype=np.int64)
        for blob in range(rng.integers(1, 4)):
            blob_rng = rng.split("blob", blob)
            clean[_blob_mask(blob_rng, h, w)] = 1 + blob_rng.integers(0, classes - 1)

        image = _render(rng.split("render"), clean, classes, blur_sigma, texture, channels)
        samples.append(Sample(image=image, label=clean.copy(), clean_label=clean, noise_mask=np.zeros((h, w), bool)))

    logger.debug("Generated %d %s samples (%dx%d, blur=%s)", n, stream, h, w, blur_sigma)
    return samples


def inject_noise(
    sample: Sample,
    rate: float,
    band: int,
    seed: int | Rng,
    noise_model: NoiseModel = NoiseModel.BAND,
    classes: int = 2,
) -> Sample:
    """Flip ``round(rate * |candidates|)`` pixels of the clean label.

    Candidates are the boundary band of the clean label (``NoiseModel.BAND``) or
    every pixel (``NoiseModel.UNIFORM``). With two classes a flip is ``1 - y``;
    otherwise a uniformly drawn different class.
    """
    if not 0.0 <= rate <= 1.0:
        raise BadRange(f"noise rate {rate} outside [0, 1]")

    rng = seed if isinstance(seed, Rng) else Rng(seed)
    clean = sample.clean_label

    if noise_model is NoiseModel.BAND:
        candidates = np.flatnonzero(boundary_band(clean, band))
    else:
        candidates = np.arange(clean.size)

    count = int(np.floor(rate * candidates.size + 0.5))
    chosen = candidates[rng.permutation(candidates.size)[:count]]

    label = clean.copy().reshape(-1)
    for pixel in chosen:
        if classes == 2:
            label[pixel] = 1 - label[pixel]
        else:
            label[pixel] = (label[pixel] + rng.integers(1, classes)) % classes
    label = label.reshape(clean.shape)

    return Sample(image=sample.image, label=label, clean_label=clean, noise_mask=label != clean)


def generate_dataset(config: GeneratorConfig) -> tuple[list[Sample], list[Sample]]:
    """Noisy train and test splits described by ``config``."""
    noise_root = Rng(config.seed).split("noise")
    splits = []
    for split, count in ((Split.TRAIN, config.n), (Split.TEST, config.n_test)):
        if count == 0:
            splits.append([])
            continue

        clean = gen_synthetic(
            count,
            config.height,
            config.width,
            config.blur_sigma,
            config.seed,
            classes=config.classes,
            channels=config.channels,
            texture=config.texture,
            stream=split.value,
        )
        splits.append(
            [
                inject_noise(
                    sample,
                    config.noise_rate,
                    config.band,
                    noise_root.split(split.value, index),
                    noise_model=config.noise_model,
                    classes=config.classes,
                )
                for index, sample in enumerate(clean)
            ]
        )

    logger.info("Generated dataset train=%d test=%d noise_rate=%s", config.n, config.n_test, config.noise_rate)
    return splits[0], splits[1]
