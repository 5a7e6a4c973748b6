"""DALE Checksum Module.

This module fingerprints parameter sets with SHA-256 so that the alternation
of a run can be checked from its metrics log: the fuzzy phase of iteration t
must start from the parameters the non-fuzzy phase of t produced, and the next
non-fuzzy phase from the fuzzy result.

Example:
    ```python
    digest = ParameterChecksum().digest(params)
    short = ParameterChecksum.short(digest)
    ```
"""

import hashlib
import logging
from pathlib import Path

import numpy as np

from .domain.segmodel.models import ModelParams

logger = logging.getLogger("dale.checksum")


class ParameterChecksum:
    """SHA-256 over names, shapes and little-endian float64 bytes of every tensor."""

    SHORT_LENGTH: int = 16

    def digest(self, params: ModelParams) -> str:
        h = hashlib.sha256()
        for name, tensor in params.items():
            h.update(name.encode("utf-8"))
            h.update(np.array(tensor.shape, dtype="<u4").tobytes())
            h.update(np.ascontiguousarray(tensor, dtype="<f8").tobytes())

        digest = h.hexdigest()
        logger.debug("Parameter checksum %s", digest[: self.SHORT_LENGTH])
        return digest

    @classmethod
    def short(cls, digest: str) -> str:
        return digest[: cls.SHORT_LENGTH]


def parameter_checksum(params: ModelParams) -> str:
    return ParameterChecksum.short(ParameterChecksum().digest(params))


def file_checksum(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
