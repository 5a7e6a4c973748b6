import numpy as np
import pytest

from jpy_dale.domain.segmodel.network import init, targets_for


@pytest.fixture
def tiny_params():
    return init(5, d=3, classes=2, channels=1, hidden=3)


@pytest.fixture
def tiny_batch(np_rng):
    """(image (1, 6, 7), label (6, 7), one-hot targets (2, 6, 7))."""
    image = np_rng.uniform(size=(1, 6, 7))
    label = (image[0] > 0.5).astype(np.int64)
    return image, label, targets_for(label, 2)
