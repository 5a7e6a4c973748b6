import logging

import numpy as np

from ...errors import ShapeMismatch
from ..numkit.tensor import ensure_finite
from .models import AdamState, Grads, ModelParams

logger = logging.getLogger("dale.segmodel.optim")


def adam_step(params: ModelParams, grads: Grads, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update.

    Raises:
        ShapeMismatch: If gradients or moments do not match the parameters
    """
    if len(state.m) != len(params) or len(state.v) != len(params) or len(grads) != len(params):
        raise ShapeMismatch(f"{len(grads)} gradients, {len(state.m)} moments for {len(params)} parameters")
    for tensor, g, m_i in zip(params, grads, state.m):
        if g.shape != tensor.shape or m_i.shape != tensor.shape:
            raise ShapeMismatch(f"gradient {g.shape}, moment {m_i.shape} for parameter {tensor.shape}")

    step = state.step + 1
    m = tuple(state.beta1 * m_i + (1.0 - state.beta1) * g for m_i, g in zip(state.m, grads))
    v = tuple(state.beta2 * v_i + (1.0 - state.beta2) * g * g for v_i, g in zip(state.v, grads))
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step

    updates = [state.lr * (m_i / correction1) / (np.sqrt(v_i / correction2) + state.eps) for m_i, v_i in zip(m, v)]
    new_params = params.zip_map(updates, lambda t, u: ensure_finite(t - u, "adam_step"))

    return new_params, AdamState(
        m=m, v=v, step=step, lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps
    )


def sgd_step(params: ModelParams, grads: Grads, lr: float) -> ModelParams:
    return params.zip_map(grads, lambda t, g: ensure_finite(t - lr * g, "sgd_step"))
