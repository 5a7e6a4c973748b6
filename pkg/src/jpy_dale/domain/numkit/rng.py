"""Deterministic, splittable random streams.

Every stochastic call site receives its own stream, derived from the root seed
and a key path (for example ``("omega", t, image, round)``). Children are
derived by key rather than by spawn order, so the order in which modules draw
numbers can never perturb another module's results.

The bit generator is numpy's PCG64 seeded through ``SeedSequence``; a double in
[0, 1) is ``(next_uint64 >> 11) * 2**-53``.
"""

import logging
import zlib
from typing import Any, final

import numpy as np
import numpy.typing as npt

from ...errors import BadRange

logger = logging.getLogger("dale.numkit.rng")

StreamKey = int | str


def _key_to_int(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise BadRange(f"stream keys must be non-negative, got {key}")
    return int(key)


@final
class Rng:
    ALGORITHM: str = "pcg64"

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()) -> None:
        if seed < 0:
            raise BadRange(f"seed must be non-negative, got {seed}")

        self._seed = int(seed)
        self._spawn_key = tuple(spawn_key)
        self._generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self._seed, spawn_key=self._spawn_key))
        )

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def spawn_key(self) -> tuple[int, ...]:
        return self._spawn_key

    def split(self, *keys: StreamKey) -> "Rng":
        """Child stream addressed by ``keys``; independent of this stream's position."""
        child_key = self._spawn_key + tuple(_key_to_int(key) for key in keys)
        logger.debug("Splitting stream seed=%d key=%s", self._seed, child_key)
        return Rng(self._seed, child_key)

    def uniform(self, lo: float, hi: float) -> float:
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise BadRange(f"uniform requires lo < hi, got [{lo}, {hi})")

        value = lo + (hi - lo) * self._generator.random()
        # rounding of lo + width*u can land on hi for extreme ranges
        return float(min(value, np.nextafter(hi, lo)))

    def uniform_array(self, lo: float, hi: float, shape: tuple[int, ...]) -> npt.NDArray[np.float64]:
        if not lo < hi:
            raise BadRange(f"uniform requires lo < hi, got [{lo}, {hi})")

        return lo + (hi - lo) * self._generator.random(shape)

    def normal(self, shape: tuple[int, ...]) -> npt.NDArray[np.float64]:
        return self._generator.standard_normal(shape)

    def integers(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi)."""
        if not lo < hi:
            raise BadRange(f"integers requires lo < hi, got [{lo}, {hi})")

        return int(self._generator.integers(lo, hi))

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return self._generator.permutation(n).astype(np.int64)

    def state(self) -> dict[str, Any]:
        return {"seed": self._seed, "spawn_key": list(self._spawn_key), "algorithm": self.ALGORITHM}
