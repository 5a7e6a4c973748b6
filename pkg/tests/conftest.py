from pathlib import Path

import numpy as np
import pytest

from jpy_dale.domain.dataio.models import Sample
from jpy_dale.domain.segmodel.models import ModelParams


def _numeric_grad(fn, x, h=1e-6):
    gradient = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        gradient[index] = (fn(plus) - fn(minus)) / (2.0 * h)
    return gradient


def _relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@pytest.fixture
def numeric_grad():
    return _numeric_grad


@pytest.fixture
def relative_error():
    return _relative_error


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_spd(np_rng):
    def build(d):
        a = np_rng.standard_normal((d, d))
        return a @ a.T + 0.5 * np.eye(d)

    return build


@pytest.fixture
def make_sample():
    """Build a clean ``Sample`` from a label map; intensity defaults to 0.7 on foreground, 0.2 elsewhere."""

    def build(label, image=None):
        label = np.asarray(label, dtype=np.int64)
        if image is None:
            image = np.where(label > 0, 0.7, 0.2)
        return Sample(
            image=np.asarray(image, dtype=np.float64),
            label=label.copy(),
            clean_label=label,
            noise_mask=np.zeros(label.shape, dtype=bool),
        )

    return build


@pytest.fixture(scope="session")
def mocks_dir():
    return Path(__file__).parent.parent / "mocks"


@pytest.fixture
def threshold_params():
    """Hand-set network whose logits are (relu(0.5 - x), x - 0.25); it predicts foreground where x > 0.375."""
    tensors = [
        np.zeros((1, 1, 3, 3)),
        np.zeros(1),
        np.zeros((2, 1, 3, 3)),
        np.array([0.0, 0.5]),
        np.array([[0.0, 1.0], [1.0, 0.0]]).reshape(2, 2, 1, 1),
        np.array([0.0, -0.25]),
    ]
    tensors[0][0, 0, 1, 1] = 1.0
    tensors[2][0, 0, 1, 1] = 1.0
    tensors[2][1, 0, 1, 1] = -1.0
    return ModelParams(tensors=tuple(tensors))
