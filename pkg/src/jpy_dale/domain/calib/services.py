"""Representation calibration between region sets.

Per-class Gaussians are estimated from weighted pixel features. The non-fuzzy
side is perturbed by ``eps * ones(d, d)`` and frozen; the fuzzy side is pulled
towards it with the squared Bures-Wasserstein distance

    W2^2 = |mu_n - mu_f|^2 + tr(A + S_f - 2 (A^1/2 S_f A^1/2)^1/2),  A = S_n.

Its gradient reaches the fuzzy feature rows through the weighted mean and
covariance: for row k, ``(w_k / W) * (G_mu + 2 G_S (x_k - mu_f))`` with
``G_mu = 2 (mu_f - mu_n)`` and ``G_S = I - A^1/2 (A^1/2 S_f A^1/2)^-1/2 A^1/2``.
"""

import logging
from dataclasses import replace
from typing import Any, final

import numpy as np
import numpy.typing as npt

from ...contracts import ServiceInterface
from ...errors import DegenerateClass, ShapeMismatch
from ..numkit.linalg import sqrtm_and_inv_sqrtm_spd, sqrtm_spd
from ..numkit.rng import Rng
from ..numkit.tensor import Tensor
from .models import CalibConfig, ClassGaussian, FeatureSet

logger = logging.getLogger("dale.calib")


def denoise_features(
    features: Tensor,
    indicator: npt.NDArray[np.bool_],
    labels: npt.NDArray[np.integer],
    weights: Tensor,
) -> FeatureSet:
    """Keep the feature columns of ``features`` (d, H, W) where ``indicator`` holds; the rest are dropped."""
    if features.shape[1:] != indicator.shape or labels.shape != indicator.shape or weights.shape != indicator.shape:
        raise ShapeMismatch(f"features {features.shape}, indicator {indicator.shape}")

    keep = indicator.reshape(-1)
    rows = features.reshape(features.shape[0], -1).T[keep]
    return FeatureSet(rows=rows, labels=labels.reshape(-1)[keep].astype(np.int64), weights=weights.reshape(-1)[keep])


def concat_features(sets: list[FeatureSet], dim: int) -> FeatureSet:
    if not sets:
        return FeatureSet(rows=np.zeros((0, dim)), labels=np.zeros(0, dtype=np.int64), weights=np.zeros(0))
    return FeatureSet(
        rows=np.concatenate([s.rows for s in sets]),
        labels=np.concatenate([s.labels for s in sets]),
        weights=np.concatenate([s.weights for s in sets]),
    )


def _class_rows(features: FeatureSet, c: int) -> npt.NDArray[np.bool_]:
    return (features.labels == c) & (features.weights > 0.0)


def class_stats(features: FeatureSet, classes: int, config: CalibConfig) -> list[ClassGaussian]:
    """Weighted mean and covariance (normalized by the weight sum) plus ``ridge * I`` per class."""
    d = features.dim
    floor = config.floor(d)

    stats = []
    for c in range(classes):
        rows = _class_rows(features, c)
        x, w = features.rows[rows], features.weights[rows]
        total = float(w.sum())

        if total == 0.0:
            mean, cov = np.zeros(d), config.ridge * np.eye(d)
        else:
            mean = (w @ x) / total
            centred = x - mean
            cov = (centred.T * w) @ centred / total
            cov = 0.5 * (cov + cov.T) + config.ridge * np.eye(d)

        count = int(rows.sum())
        stats.append(ClassGaussian(c=c, mean=mean, cov=cov, count=count, usable=count >= floor))
        if count < floor:
            logger.debug("Class %d has %d pixels, below floor %d", c, count, floor)

    return stats


def perturb_cov(gaussian: ClassGaussian, rng: Rng, eps_max: float) -> ClassGaussian:
    """Add ``eps * ones(d, d)`` with ``eps ~ uniform(0, eps_max)``."""
    if eps_max == 0.0:
        return replace(gaussian, epsilon=0.0)

    epsilon = rng.uniform(0.0, eps_max)
    return replace(gaussian, cov=gaussian.cov + epsilon, epsilon=epsilon)


def bures_w2(first: ClassGaussian, second: ClassGaussian) -> float:
    """Squared 2-Wasserstein distance between two Gaussians.

    Raises:
        DegenerateClass: If either Gaussian is below the pixel floor
    """
    if not (first.usable and second.usable):
        raise DegenerateClass(f"class {first.c}: counts {first.count} / {second.count}")

    root = sqrtm_spd(first.cov)
    product = root @ second.cov @ root
    cross = sqrtm_spd(0.5 * (product + product.T))
    delta = first.mean - second.mean

    value = float(delta @ delta + np.trace(first.cov) + np.trace(second.cov) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def _class_term(
    target: ClassGaussian, fuzzy: ClassGaussian, target_root: Tensor
) -> tuple[float, Tensor, Tensor]:
    """Distance to the frozen target and the gradients with respect to the fuzzy mean and covariance."""
    product = target_root @ fuzzy.cov @ target_root
    cross, cross_inverse = sqrtm_and_inv_sqrtm_spd(0.5 * (product + product.T))
    delta = fuzzy.mean - target.mean

    value = float(delta @ delta + np.trace(target.cov) + np.trace(fuzzy.cov) - 2.0 * np.trace(cross))
    g_mean = 2.0 * delta
    g_cov = np.eye(delta.size) - target_root @ cross_inverse @ target_root
    return max(value, 0.0), g_mean, 0.5 * (g_cov + g_cov.T)


def lw_loss_and_grad(
    fuzzy: FeatureSet,
    targets: list[ClassGaussian],
    config: CalibConfig,
    target_roots: dict[int, Tensor] | None = None,
) -> tuple[float, Tensor, list[int]]:
    """Alignment loss summed over usable class pairs and its gradient w.r.t. ``fuzzy.rows``.

    Returns the loss, the (n, d) row gradient and the classes that contributed.
    Classes unusable on either side contribute nothing.
    """
    classes = len(targets)
    stats = class_stats(fuzzy, classes, config)
    gradient = np.zeros_like(fuzzy.rows)

    loss, used = 0.0, []
    for target, current in zip(targets, stats):
        if not (target.usable and current.usable):
            continue

        root = target_roots[target.c] if target_roots and target.c in target_roots else sqrtm_spd(target.cov)
        value, g_mean, g_cov = _class_term(target, current, root)
        loss += value
        used.append(target.c)

        rows = _class_rows(fuzzy, target.c)
        w = fuzzy.weights[rows]
        centred = fuzzy.rows[rows] - current.mean
        gradient[rows] = (w / w.sum())[:, None] * (g_mean[None, :] + 2.0 * centred @ g_cov)

    return loss, gradient, used


def fuzzy_loss(
    ce_per_pixel: Tensor,
    omega: Tensor,
    mask: Tensor,
    lw: float,
    alpha: float,
    support: npt.NDArray[np.bool_] | None = None,
) -> float:
    """``sum(omega * M * ce) / sum(omega * M) + mean(omega over support) * alpha * lw``."""
    if ce_per_pixel.shape != omega.shape or mask.shape != omega.shape:
        raise ShapeMismatch(f"ce {ce_per_pixel.shape}, omega {omega.shape}, mask {mask.shape}")

    weights = omega * mask
    total = float(weights.sum())
    ce = float(np.sum(weights * ce_per_pixel)) / total if total > 0.0 else 0.0

    inside = mask > 0.0 if support is None else support
    scale = float(omega[inside].mean()) if inside.any() else 0.0
    return ce + scale * alpha * lw


@final
class Calibrator(ServiceInterface[CalibConfig]):
    """Holds the frozen, perturbed non-fuzzy class Gaussians of the current iteration."""

    def __init__(self, *, config: CalibConfig):
        super().__init__(config=config)
        self._targets: list[ClassGaussian] = []
        self._roots: dict[int, Tensor] = {}

    @property
    def config(self) -> CalibConfig:
        return self._config

    @property
    def targets(self) -> list[ClassGaussian]:
        return list(self._targets)

    def freeze_targets(self, features: FeatureSet, classes: int, rng: Rng) -> list[ClassGaussian]:
        stats = class_stats(features, classes, self._config)
        self._targets = [perturb_cov(g, rng.split("perturb", g.c), self._config.eps_max) for g in stats]
        self._roots = {g.c: sqrtm_spd(g.cov) for g in self._targets if g.usable}

        logger.debug("Frozen non-fuzzy targets usable=%s", [g.c for g in self._targets if g.usable])
        return self.targets

    def alignment(self, fuzzy: FeatureSet) -> tuple[float, Tensor, list[int]]:
        if not self._config.use_alignment or not self._targets:
            return 0.0, np.zeros_like(fuzzy.rows), []
        return lw_loss_and_grad(fuzzy, self._targets, self._config, self._roots)

    def dump(self, t: int, lw: float, fuzzy: FeatureSet | None = None) -> dict[str, Any]:
        data: dict[str, Any] = {"t": t, "classes": [g.to_dict() for g in self._targets], "L_W": lw}
        if fuzzy is not None:
            data["fuzzy_classes"] = [g.to_dict() for g in class_stats(fuzzy, len(self._targets), self._config)]
        return data
