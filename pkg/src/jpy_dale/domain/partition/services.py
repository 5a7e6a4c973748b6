"""Fuzzy / non-fuzzy region partitioning.

Each image is cut into h x w patches. A patch is scored by its average entropy
(within-patch histogram frequency of each pixel's intensity bin, natural log)
and by the fraction of edge pixels in the label map. Both scores are min-max
normalized over the patches of one image, fused by ``max`` and turned into soft
fuzzy / non-fuzzy masks by the threshold ``tau``.
"""

import logging
from typing import final

import numpy as np
import numpy.typing as npt

from ...contracts import ServiceInterface
from ...errors import BadPatchSize, BadRange, EmptyPatch
from ..dataio.generator import class_boundary
from ..dataio.models import Sample
from ..numkit.tensor import Tensor
from .models import PartitionSettings, PatchScores, RegionSample, SoftMasks

logger = logging.getLogger("dale.partition")


def avg_entropy(patch: Tensor, bins: int) -> float:
    """Average over pixels of ``-p_k ln p_k``, p_k the frequency of pixel k's bin."""
    values = np.asarray(patch, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EmptyPatch()
    if bins < 2:
        raise BadRange(f"bins must be >= 2, got {bins}")

    index = np.clip(np.floor(values * bins).astype(np.int64), 0, bins - 1)
    p = np.bincount(index, minlength=bins)[index] / values.size
    return float(-np.mean(p * np.log(p)))


def edge_map(label: npt.NDArray[np.integer]) -> npt.NDArray[np.bool_]:
    return class_boundary(label)


def edge_ratio(full_label: npt.NDArray[np.integer], window: tuple[slice, slice]) -> float:
    """Fraction of edge pixels inside ``window``; the edge test sees the full label map."""
    patch = edge_map(full_label)[window]
    if patch.size == 0:
        raise EmptyPatch()
    return float(patch.mean())


def minmax_norm(values: Tensor) -> Tensor:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def patch_masks(m: Tensor, tau: float) -> tuple[Tensor, Tensor]:
    """Per-patch (M_f, M_n) values; ``tau - m`` is clamped to [0, 1]."""
    if not 0.0 < tau < 1.0:
        raise BadRange(f"tau must be in (0, 1), got {tau}")

    fuzzy = np.where(m > tau, 1.0, m)
    nonfuzzy = np.where(m < tau, 1.0, np.clip(tau - m, 0.0, 1.0))
    return fuzzy, nonfuzzy


def soft_masks(m: Tensor, tau: float, patch: tuple[int, int], shape: tuple[int, int]) -> SoftMasks:
    """Broadcast patch-grid scores ``m`` (gh, gw) to pixel masks cropped to ``shape``."""
    fuzzy, nonfuzzy = patch_masks(np.asarray(m, dtype=np.float64), tau)
    ones = np.ones(patch)
    height, width = shape
    return SoftMasks(
        fuzzy=np.kron(fuzzy, ones)[:height, :width],
        nonfuzzy=np.kron(nonfuzzy, ones)[:height, :width],
        tau=tau,
    )


def _patches(values: np.ndarray, ph: int, pw: int) -> np.ndarray:
    gh, gw = values.shape[0] // ph, values.shape[1] // pw
    return values.reshape(gh, ph, gw, pw).transpose(0, 2, 1, 3).reshape(gh * gw, ph * pw)


def score_patches(sample: Sample, settings: PartitionSettings) -> PatchScores:
    height, width = sample.shape
    ph, pw = settings.patch_h, settings.patch_w
    if not (1 <= ph <= height and 1 <= pw <= width):
        logger.error("Patch %dx%d does not fit image %dx%d", ph, pw, height, width)
        raise BadPatchSize(f"{ph}x{pw} on {height}x{width}")

    pad = ((0, -height % ph), (0, -width % pw))
    intensity = np.pad(sample.intensity(), pad, mode="reflect")
    label = np.pad(sample.label, pad, mode="reflect")
    grid = (intensity.shape[0] // ph, intensity.shape[1] // pw)

    r = np.array([avg_entropy(patch, settings.bins) for patch in _patches(intensity, ph, pw)])
    e = _patches(edge_map(label), ph, pw).mean(axis=1)
    r_std, e_std = minmax_norm(r), minmax_norm(e)

    if settings.use_entropy and settings.use_edge:
        m = np.maximum(r_std, e_std)
    elif settings.use_entropy:
        m = r_std
    else:
        m = e_std

    return PatchScores(grid=grid, r=r, e=e, r_std=r_std, e_std=e_std, m=m)


def split(sample: Sample, settings: PartitionSettings) -> RegionSample:
    scores = score_patches(sample, settings)
    masks = soft_masks(
        scores.m.reshape(scores.grid), settings.tau, (settings.patch_h, settings.patch_w), sample.shape
    )
    return RegionSample(base=sample, scores=scores, masks=masks, patch=(settings.patch_h, settings.patch_w))


@final
class Partitioner(ServiceInterface[PartitionSettings]):
    """Partitions samples and caches the result per sample index."""

    def __init__(self, *, config: PartitionSettings):
        super().__init__(config=config)
        self._cache: dict[int, RegionSample] = {}

    @property
    def config(self) -> PartitionSettings:
        return self._config

    def split(self, sample: Sample) -> RegionSample:
        return split(sample, self._config)

    def split_all(self, samples: list[Sample], recompute: bool = False) -> list[RegionSample]:
        if recompute:
            self._cache.clear()

        regions = []
        for index, sample in enumerate(samples):
            if index not in self._cache:
                self._cache[index] = split(sample, self._config)
            regions.append(self._cache[index])

        fuzzy = sum(float(region.masks.fuzzy.sum()) for region in regions)
        logger.debug("Partitioned %d samples, fuzzy weight %.3f", len(regions), fuzzy)
        return regions
