import numpy as np
import pytest

from jpy_dale.domain.numkit.rng import Rng
from jpy_dale.errors import BadRange


def test_first_draw_is_the_pcg64_double():
    raw = int(np.random.PCG64(np.random.SeedSequence(0)).random_raw())

    assert Rng(0).uniform(0.0, 1.0) == (raw >> 11) * 2.0**-53


def test_same_seed_same_stream():
    assert Rng(5).normal((4,)).tolist() == Rng(5).normal((4,)).tolist()
    assert Rng(5).permutation(10).tolist() == Rng(5).permutation(10).tolist()


def test_split_is_independent_of_parent_position():
    fresh = Rng(3)
    used = Rng(3)
    used.normal((100,))

    assert fresh.split("omega", 1, 2).uniform(0.0, 1.0) == used.split("omega", 1, 2).uniform(0.0, 1.0)


def test_distinct_keys_give_distinct_streams():
    root = Rng(3)

    assert root.split("a").uniform(0.0, 1.0) != root.split("b").uniform(0.0, 1.0)
    assert root.split(1, 2).uniform(0.0, 1.0) != root.split(2, 1).uniform(0.0, 1.0)


def test_uniform_stays_in_half_open_range():
    rng = Rng(11)
    values = [rng.uniform(2.0, 3.0) for _ in range(200)]

    assert min(values) >= 2.0
    assert max(values) < 3.0


@pytest.mark.parametrize("lo, hi", [(1.0, 1.0), (2.0, 1.0), (0.0, float("inf"))])
def test_uniform_rejects_bad_ranges(lo, hi):
    with pytest.raises(BadRange):
        Rng(0).uniform(lo, hi)


def test_integers_and_negative_seed():
    rng = Rng(0)
    assert all(1 <= rng.integers(1, 4) < 4 for _ in range(50))

    with pytest.raises(BadRange):
        Rng(-1)
    with pytest.raises(BadRange):
        rng.integers(3, 3)


def test_state_describes_the_stream():
    assert Rng(9).split("x", 4).state() == {
        "seed": 9,
        "spawn_key": [Rng(9).split("x").spawn_key[0], 4],
        "algorithm": "pcg64",
    }
