"""Segmentation quality metrics.

Surface distances are exact nearest-neighbour distances between boundary pixels. When exactly
one of the two surfaces is empty, HD95 and ASD report the image diagonal; when
both are empty they report 0.
"""

import logging

import numpy as np
import numpy.typing as npt
from scipy import ndimage
from scipy.spatial.distance import cdist

from ...errors import ShapeMismatch
from .models import MetricRow, SurfaceSet

logger = logging.getLogger("dale.metrics")

Mask = npt.NDArray[np.bool_]
_CROSS = ndimage.generate_binary_structure(2, 1)


def _check(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")


def dice(pred: Mask, gt: Mask) -> float:
    _check(pred, gt)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


def miou(pred: npt.NDArray[np.integer], gt: npt.NDArray[np.integer], classes: int) -> float:
    """Mean IoU over classes present in either map."""
    _check(pred, gt)
    scores = []
    for c in range(classes):
        p, g = pred == c, gt == c
        union = int(np.logical_or(p, g).sum())
        if union:
            scores.append(int(np.logical_and(p, g).sum()) / union)
    return float(np.mean(scores)) if scores else 1.0


def surface(mask: Mask) -> SurfaceSet:
    """Mask pixels with a non-mask 4-neighbour; outside the image counts as non-mask."""
    core = mask.astype(bool)
    interior = ndimage.binary_erosion(core, structure=_CROSS, border_value=0)
    return SurfaceSet(points=np.argwhere(core & ~interior).astype(np.int64))


def _nearest(source: SurfaceSet, target: SurfaceSet) -> np.ndarray:
    return cdist(source.points.astype(np.float64), target.points.astype(np.float64)).min(axis=1)


def surface_distances(pred: Mask, gt: Mask) -> tuple[np.ndarray, np.ndarray] | None:
    """Directed nearest-surface distances (pred -> gt, gt -> pred); ``None`` when a surface is empty."""
    _check(pred, gt)
    sp, sg = surface(pred), surface(gt)
    if sp.empty or sg.empty:
        return None
    return _nearest(sp, sg), _nearest(sg, sp)


def _empty_value(pred: Mask, gt: Mask) -> float:
    if surface(pred).empty and surface(gt).empty:
        return 0.0
    height, width = pred.shape
    return float(np.hypot(height, width))


def hd95(pred: Mask, gt: Mask) -> float:
    distances = surface_distances(pred, gt)
    if distances is None:
        return _empty_value(pred, gt)
    return float(np.percentile(np.concatenate(distances), 95, method="linear"))


def asd(pred: Mask, gt: Mask) -> float:
    distances = surface_distances(pred, gt)
    if distances is None:
        return _empty_value(pred, gt)
    return float(np.mean(np.concatenate(distances)))


def evaluate_masks(
    pred: npt.NDArray[np.integer], gt: npt.NDArray[np.integer], classes: int, surface_class: int = 1
) -> MetricRow:
    """Dice averaged over foreground classes, mIoU over all classes, HD95/ASD on ``surface_class``."""
    _check(pred, gt)
    foreground = [dice(pred == c, gt == c) for c in range(1, classes)]
    p, g = pred == surface_class, gt == surface_class
    return MetricRow(
        Dice=float(np.mean(foreground)),
        mIoU=miou(pred, gt, classes),
        HD95=hd95(p, g),
        ASD=asd(p, g),
    )


def mean_rows(rows: list[MetricRow]) -> MetricRow:
    return MetricRow(
        Dice=float(np.mean([r.Dice for r in rows])),
        mIoU=float(np.mean([r.mIoU for r in rows])),
        HD95=float(np.mean([r.HD95 for r in rows])),
        ASD=float(np.mean([r.ASD for r in rows])),
    )
