import numpy as np
import pytest

from jpy_dale.domain.dataio.generator import generate_dataset
from jpy_dale.domain.dataio.models import Dataset, GeneratorConfig
from jpy_dale.domain.trainer.models import RunConfig


@pytest.fixture(scope="module")
def tiny_dataset():
    train, test = generate_dataset(
        GeneratorConfig(n=3, n_test=2, height=16, width=16, blur_sigma=1.5, noise_rate=0.3, seed=1)
    )
    return Dataset.in_memory(train, test, classes=2)


@pytest.fixture
def constant_dataset(make_sample):
    samples = [make_sample(np.zeros((16, 16), dtype=np.int64), np.full((16, 16), 0.3)) for _ in range(3)]
    return Dataset.in_memory(samples[:2], samples[2:], classes=2)


@pytest.fixture
def tiny_config():
    def build(**overrides):
        values = {
            "T": 2,
            "patch_h": 8,
            "patch_w": 8,
            "d": 3,
            "hidden": 3,
            "batch_size": 2,
            "pixel_cap": 8,
            "lr": 1e-2,
            "seed": 5,
        }
        values.update(overrides)
        return RunConfig(**values)

    return build
