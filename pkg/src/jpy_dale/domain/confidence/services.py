"""Loss-consistency optimization of per-pixel label confidence.

A shadow copy of the non-fuzzy-phase parameters takes one plain gradient step
on the omega-weighted fuzzy loss, ``theta_p = theta_n - lr * sum_k omega_k *
g_k``. Since ``d theta_p / d omega_k = -lr * g_k``, the derivative of the
non-fuzzy loss at ``theta_p`` with respect to ``omega_k`` is ``-lr * <g_n,
g_k>``. The confidence of pixel k therefore rises by ``eta * <g_n, g_k>``: a
fuzzy label whose gradient agrees with the non-fuzzy set gains weight, one that
opposes it loses weight.
"""

import logging
from typing import Callable, final

import numpy as np
import numpy.typing as npt

from ...contracts import ServiceInterface
from ...errors import ShapeMismatch, UninitializedGradient
from ..numkit.rng import Rng
from ..numkit.tensor import Tensor
from ..segmodel.models import ModelParams, WeightedImage, flatten_grads
from ..segmodel.network import loss_and_grads, pixel_loss_and_grads
from ..segmodel.optim import sgd_step
from .models import ConfidenceMap, OmegaSettings, ShadowModel

logger = logging.getLogger("dale.confidence")

BatchProvider = Callable[[int], list[WeightedImage]]


def select_pixels(support: npt.NDArray[np.bool_], cap: int, rng: Rng) -> npt.NDArray[np.bool_]:
    """Support pixels, uniformly subsampled to at most ``cap``."""
    flat = np.flatnonzero(support)
    if flat.size > cap:
        flat = flat[rng.permutation(flat.size)[:cap]]

    selected = np.zeros(support.size, dtype=bool)
    selected[flat] = True
    return selected.reshape(support.shape)


def pseudo_update(
    theta_n: ModelParams,
    fuzzy: WeightedImage,
    omega: ConfidenceMap,
    inner_lr: float,
    pixels: npt.NDArray[np.bool_],
    t: int = 0,
) -> ShadowModel:
    """``theta_n - inner_lr * grad sum_{k in pixels} omega_k * CE_k``."""
    if omega.omega.shape != fuzzy.weights.shape or pixels.shape != fuzzy.weights.shape:
        raise ShapeMismatch(f"omega {omega.omega.shape} for image {fuzzy.weights.shape}")

    _, grads = loss_and_grads(theta_n, fuzzy.image, fuzzy.targets, omega.omega * pixels, normalized=False)
    return ShadowModel(params=sgd_step(theta_n, grads, inner_lr), t=t)


def per_pixel_grads(theta: ModelParams, fuzzy: WeightedImage, pixels: npt.NDArray[np.bool_]) -> list[Tensor]:
    """Flattened single-pixel CE gradients, one per selected pixel in row-major order."""
    if pixels.shape != fuzzy.weights.shape:
        raise ShapeMismatch(f"pixels {pixels.shape} for image {fuzzy.weights.shape}")

    width = fuzzy.weights.shape[1]
    gradients = []
    for flat in np.flatnonzero(pixels):
        y, x = divmod(int(flat), width)
        _, grads = pixel_loss_and_grads(theta, fuzzy.image, fuzzy.targets, y, x)
        gradients.append(flatten_grads(grads))
    return gradients


def nonfuzzy_gradient(params: ModelParams, batch: list[WeightedImage]) -> Tensor:
    """Flattened gradient of the batch's mask-weighted CE normalized by total weight."""
    total = sum(float(item.weights.sum()) for item in batch)
    accumulated = np.zeros(params.size)
    if total == 0.0:
        return accumulated

    for item in batch:
        _, grads = loss_and_grads(params, item.image, item.targets, item.weights, normalized=False)
        accumulated += flatten_grads(grads)
    return accumulated / total


def omega_update(
    theta_p: ShadowModel,
    theta_n: ModelParams,
    nonfuzzy_batch: list[WeightedImage],
    fuzzy: WeightedImage,
    omega: ConfidenceMap,
    pixels: npt.NDArray[np.bool_],
    fuzzy_grads: list[Tensor] | None = None,
) -> ConfidenceMap:
    """One confidence step; ``grad_omega`` of the result holds this round's meta-gradient."""
    if pixels.shape != omega.omega.shape:
        raise ShapeMismatch(f"pixels {pixels.shape} for omega {omega.omega.shape}")
    if fuzzy_grads is None:
        fuzzy_grads = per_pixel_grads(theta_n, fuzzy, pixels)

    g_n = nonfuzzy_gradient(theta_p.params, nonfuzzy_batch)
    meta = np.zeros(omega.omega.shape)
    meta.reshape(-1)[np.flatnonzero(pixels)] = [float(g_n @ g_k) for g_k in fuzzy_grads]

    updated = np.where(pixels, np.clip(omega.omega + omega.eta * meta, 0.0, omega.omega_max), omega.omega)
    return ConfidenceMap(
        omega=updated,
        eta=omega.eta,
        omega_max=omega.omega_max,
        support=omega.support,
        evaluated=pixels,
        grad_omega=meta,
    )


def omega_loop(
    theta_n: ModelParams,
    fuzzy: WeightedImage,
    nonfuzzy_batches: BatchProvider,
    settings: OmegaSettings,
    previous: ConfidenceMap,
    rng: Rng,
    t: int = 0,
) -> ConfidenceMap:
    """K rounds of pseudo-step plus confidence step, re-deriving theta_p from the current omega each round."""
    support = fuzzy.weights > settings.support_threshold
    pixels = select_pixels(support, settings.pixel_cap, rng.split("pixels"))
    fuzzy_grads = per_pixel_grads(theta_n, fuzzy, pixels)

    current = ConfidenceMap(
        omega=previous.omega,
        eta=settings.eta,
        omega_max=settings.omega_max,
        support=support,
        evaluated=pixels,
    )
    accumulated = np.zeros(support.shape)
    for k in range(settings.K):
        shadow = pseudo_update(theta_n, fuzzy, current, settings.inner_lr, pixels, t=t)
        current = omega_update(shadow, theta_n, nonfuzzy_batches(k), fuzzy, current, pixels, fuzzy_grads)
        accumulated += current.grad_omega if current.grad_omega is not None else 0.0

    logger.debug(
        "Confidence loop t=%d pixels=%d positive=%d mean_omega=%.6f",
        t,
        int(pixels.sum()),
        int((accumulated[pixels] > 0.0).sum()),
        float(current.omega[pixels].mean()) if pixels.any() else float("nan"),
    )
    return ConfidenceMap(
        omega=current.omega,
        eta=current.eta,
        omega_max=current.omega_max,
        support=support,
        evaluated=pixels,
        grad_omega=accumulated,
    )


def noise_indicator(conf: ConfidenceMap) -> npt.NDArray[np.bool_]:
    """True where the meta-gradient is strictly positive on an evaluated pixel.

    Raises:
        UninitializedGradient: If no confidence loop has populated ``grad_omega``
    """
    if conf.grad_omega is None:
        raise UninitializedGradient()
    return (conf.grad_omega > 0.0) & conf.evaluated & conf.support


@final
class ConfidenceEstimator(ServiceInterface[OmegaSettings]):
    @property
    def config(self) -> OmegaSettings:
        return self._config

    def initial(self, shape: tuple[int, int]) -> ConfidenceMap:
        return ConfidenceMap.initial(shape, self._config)

    def estimate(
        self,
        theta_n: ModelParams,
        fuzzy: WeightedImage,
        nonfuzzy_batches: BatchProvider,
        previous: ConfidenceMap,
        rng: Rng,
        t: int = 0,
    ) -> ConfidenceMap:
        if not self._config.use_omega:
            support = fuzzy.weights > self._config.support_threshold
            return ConfidenceMap(
                omega=previous.omega,
                eta=previous.eta,
                omega_max=previous.omega_max,
                support=support,
                evaluated=support,
            )
        return omega_loop(theta_n, fuzzy, nonfuzzy_batches, self._config, previous, rng, t=t)

    def retained(self, conf: ConfidenceMap) -> npt.NDArray[np.bool_]:
        """Pixels kept for alignment statistics; the whole support when confidence learning is off."""
        if not self._config.use_omega:
            return conf.support.copy()
        return noise_indicator(conf)
