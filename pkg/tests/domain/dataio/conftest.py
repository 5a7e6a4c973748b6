import numpy as np
import pytest

from jpy_dale.domain.dataio.models import GeneratorConfig, Sample


@pytest.fixture
def square_label():
    label = np.zeros((4, 4), dtype=np.int64)
    label[:2, :2] = 1
    return label


@pytest.fixture
def blob_sample():
    clean = np.zeros((16, 16), dtype=np.int64)
    clean[4:12, 5:11] = 1
    image = np.where(clean == 1, 0.7, 0.2)
    return Sample(image=image, label=clean.copy(), clean_label=clean, noise_mask=np.zeros((16, 16), dtype=bool))


@pytest.fixture
def small_config():
    return GeneratorConfig(n=4, n_test=2, height=16, width=16, blur_sigma=1.5, noise_rate=0.3, seed=3)
