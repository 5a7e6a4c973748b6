import numpy as np
import pytest

from jpy_dale.domain.partition.models import PartitionSettings


@pytest.fixture
def framed_sample(make_sample):
    """32x32 square covering rows/cols 4..27; the four centre 8x8 patches are pure interior."""
    label = np.zeros((32, 32), dtype=np.int64)
    label[4:28, 4:28] = 1
    return make_sample(label)


@pytest.fixture
def constant_sample(make_sample):
    return make_sample(np.zeros((32, 32), dtype=np.int64), np.full((32, 32), 0.4))


@pytest.fixture
def settings_8():
    return PartitionSettings(patch_h=8, patch_w=8)
