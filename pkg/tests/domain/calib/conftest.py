import numpy as np
import pytest

from jpy_dale.domain.calib.models import CalibConfig, ClassGaussian, FeatureSet


@pytest.fixture
def calib_config():
    return CalibConfig()


@pytest.fixture
def gaussian():
    def build(mean, cov, c=0, count=10):
        return ClassGaussian(
            c=c,
            mean=np.atleast_1d(np.asarray(mean, dtype=float)),
            cov=np.atleast_2d(np.asarray(cov, dtype=float)),
            count=count,
            usable=True,
        )

    return build


@pytest.fixture
def feature_set(np_rng):
    """Two-class feature rows in d=2, six rows per class, positive weights."""

    def build(shift=0.0):
        rows = np_rng.standard_normal((12, 2)) + shift
        rows[6:] *= np.array([2.0, 0.5])
        labels = np.repeat([0, 1], 6)
        return FeatureSet(rows=rows, labels=labels, weights=np_rng.uniform(0.2, 1.0, size=12))

    return build
