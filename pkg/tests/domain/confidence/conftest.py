import numpy as np
import pytest

from jpy_dale.domain.confidence.models import ConfidenceMap
from jpy_dale.domain.segmodel.models import WeightedImage
from jpy_dale.domain.segmodel.network import init, loss_and_grads, targets_for


@pytest.fixture
def theta_n():
    return init(2, d=4, classes=2, channels=1, hidden=4)


def _weighted(rng, weights=None):
    image = rng.uniform(size=(1, 8, 8))
    label = rng.integers(0, 2, size=(8, 8))
    if weights is None:
        weights = rng.uniform(size=(8, 8))
    return WeightedImage(image=image, targets=targets_for(label, 2), weights=weights)


@pytest.fixture
def fuzzy_item(np_rng):
    return _weighted(np_rng, np.ones((8, 8)))


@pytest.fixture
def nonfuzzy_batch(np_rng):
    return [_weighted(np_rng), _weighted(np_rng)]


@pytest.fixture
def ones_map():
    def build(value=1.0, omega_max=2.0, eta=0.1):
        return ConfidenceMap(
            omega=np.full((8, 8), value),
            eta=eta,
            omega_max=omega_max,
            support=np.ones((8, 8), dtype=bool),
            evaluated=np.zeros((8, 8), dtype=bool),
        )

    return build


@pytest.fixture
def nonfuzzy_loss():
    """Mask-weighted CE of a batch normalized by its total weight."""

    def evaluate(params, batch):
        total = sum(float(item.weights.sum()) for item in batch)
        values = [loss_and_grads(params, item.image, item.targets, item.weights, normalized=False)[0] for item in batch]
        return sum(values) / total

    return evaluate
