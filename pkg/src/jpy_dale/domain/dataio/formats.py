"""Binary file formats.

* PGM "P5", maxval 255: images (intensity * 255), labels (class indices), soft
  masks (round(value * 255)).
* "DLF1": 4-byte magic, u32 little-endian rank, ``rank`` u32 dims, then
  little-endian float32 values in row-major order.
* "DLD1": the same layout with float64 values, used where state must round-trip
  bit for bit (checkpoints).
"""

import logging
import re
from pathlib import Path

import numpy as np
import numpy.typing as npt

from ...errors import BadMagic, BadMaxval, ShapeMismatch, TruncatedFile
from ..numkit.tensor import Tensor, ensure_finite

logger = logging.getLogger("dale.dataio.formats")

PGM_MAGIC = b"P5"
PGM_MAXVAL = 255
F32_MAGIC = b"DLF1"
F64_MAGIC = b"DLD1"

_DTYPES = {F32_MAGIC: np.dtype("<f4"), F64_MAGIC: np.dtype("<f8")}
_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def encode_pgm(values: npt.NDArray[np.integer]) -> bytes:
    if values.ndim != 2 or values.size == 0:
        raise ShapeMismatch(f"PGM needs a non-empty 2-D map, got {values.shape}")
    if values.min() < 0 or values.max() > PGM_MAXVAL:
        raise BadMaxval(f"values span [{values.min()}, {values.max()}]")

    height, width = values.shape
    header = f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + values.astype(np.uint8).tobytes()


def decode_pgm(data: bytes) -> npt.NDArray[np.uint8]:
    if data[:2] != PGM_MAGIC:
        raise BadMagic(f"expected P5, got {data[:2]!r}")

    position = 2
    fields = []
    for _ in range(3):
        match = _PGM_TOKEN.match(data, position)
        if match is None or not match.group(1).isdigit():
            raise TruncatedFile("incomplete PGM header")
        fields.append(int(match.group(1)))
        position = match.end()

    width, height, maxval = fields
    if maxval != PGM_MAXVAL:
        raise BadMaxval(f"maxval {maxval}")

    # exactly one whitespace byte separates the header from the raster
    position += 1
    payload = data[position : position + width * height]
    if len(payload) < width * height:
        raise TruncatedFile(f"expected {width * height} bytes, got {len(payload)}")

    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: Path, values: npt.NDArray[np.integer]) -> None:
    Path(path).write_bytes(encode_pgm(values))


def read_pgm(path: Path) -> npt.NDArray[np.uint8]:
    return decode_pgm(Path(path).read_bytes())


def mask_to_u8(mask: Tensor) -> npt.NDArray[np.uint8]:
    return np.floor(np.clip(mask, 0.0, 1.0) * PGM_MAXVAL + 0.5).astype(np.uint8)


def image_from_u8(values: npt.NDArray[np.uint8]) -> Tensor:
    return values.astype(np.float64) / PGM_MAXVAL


def encode_tensor(tensor: Tensor, magic: bytes = F32_MAGIC) -> bytes:
    values = np.asarray(tensor)
    if values.ndim == 0:
        raise ShapeMismatch("rank-0 tensors have no dims to store")
    ensure_finite(values.astype(np.float64), "encode_tensor")

    header = magic + np.array([values.ndim, *values.shape], dtype="<u4").tobytes()
    return header + np.ascontiguousarray(values, dtype=_DTYPES[magic]).tobytes()


def decode_tensor(data: bytes, magic: bytes = F32_MAGIC) -> Tensor:
    if data[:4] != magic:
        raise BadMagic(f"expected {magic!r}, got {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedFile("missing rank")

    rank = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
    if rank == 0:
        raise ShapeMismatch("empty dims")
    if len(data) < 8 + 4 * rank:
        raise TruncatedFile(f"missing dims for rank {rank}")

    shape = tuple(int(d) for d in np.frombuffer(data, dtype="<u4", count=rank, offset=8))
    dtype = _DTYPES[magic]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = data[8 + 4 * rank :]
    if len(payload) < expected:
        raise TruncatedFile(f"expected {expected} payload bytes, got {len(payload)}")
    if len(payload) > expected:
        raise ShapeMismatch(f"{len(payload) - expected} bytes beyond shape {shape}")

    return np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(shape)


def write_f32(path: Path, tensor: Tensor) -> None:
    Path(path).write_bytes(encode_tensor(tensor, F32_MAGIC))


def read_f32(path: Path) -> Tensor:
    return decode_tensor(Path(path).read_bytes(), F32_MAGIC)
