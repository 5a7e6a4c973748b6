"""Checkpoint container.

Layout: magic "DLCK", u32 little-endian index length, UTF-8 JSON index, then
the concatenated DLD1 blobs of every stored tensor. The index maps each tensor
name to ``{"offset", "length", "shape"}`` (offset relative to the first blob)
and carries free-form ``meta``.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from ...errors import BadMagic, MissingFile, TruncatedFile
from ..dataio.formats import F64_MAGIC, decode_tensor, encode_tensor
from ..numkit.tensor import Tensor
from .models import AdamState, ModelParams

logger = logging.getLogger("dale.segmodel.checkpoint")

CHECKPOINT_MAGIC = b"DLCK"


def encode_checkpoint(tensors: dict[str, Tensor], meta: dict[str, Any]) -> bytes:
    blobs, index, offset = [], {}, 0
    for name, tensor in tensors.items():
        blob = encode_tensor(np.asarray(tensor, dtype=np.float64), F64_MAGIC)
        index[name] = {"offset": offset, "length": len(blob), "shape": list(np.shape(tensor))}
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps({"tensors": index, "meta": meta}, sort_keys=True).encode("utf-8")
    return CHECKPOINT_MAGIC + np.array([len(header)], dtype="<u4").tobytes() + header + b"".join(blobs)


def decode_checkpoint(data: bytes) -> tuple[dict[str, Tensor], dict[str, Any]]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"expected {CHECKPOINT_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedFile("missing index length")

    length = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
    if len(data) < 8 + length:
        raise TruncatedFile("incomplete index")
    index = json.loads(data[8 : 8 + length].decode("utf-8"))

    body = data[8 + length :]
    tensors = {}
    for name, item in index["tensors"].items():
        blob = body[item["offset"] : item["offset"] + item["length"]]
        if len(blob) < item["length"]:
            raise TruncatedFile(f"tensor {name}")
        tensors[name] = decode_tensor(blob, F64_MAGIC)

    return tensors, index["meta"]


def pack_model(params: ModelParams, adam: AdamState | None = None) -> tuple[dict[str, Tensor], dict[str, Any]]:
    tensors: dict[str, Tensor] = dict(params.items())
    meta: dict[str, Any] = {"params": list(params.names)}
    if adam is not None:
        for name, m, v in zip(params.names, adam.m, adam.v):
            tensors[f"adam.m.{name}"] = m
            tensors[f"adam.v.{name}"] = v
        meta["adam"] = {"step": adam.step, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
    return tensors, meta


def unpack_model(tensors: dict[str, Tensor], meta: dict[str, Any]) -> tuple[ModelParams, AdamState | None]:
    names = tuple(meta["params"])
    params = ModelParams(tensors=tuple(tensors[name] for name in names), names=names)

    adam = None
    if "adam" in meta:
        adam = AdamState(
            m=tuple(tensors[f"adam.m.{name}"] for name in names),
            v=tuple(tensors[f"adam.v.{name}"] for name in names),
            **meta["adam"],
        )
    return params, adam


def save_checkpoint(path: Path, tensors: dict[str, Tensor], meta: dict[str, Any]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_checkpoint(tensors, meta))
    logger.debug("Saved checkpoint %s with %d tensors", path, len(tensors))


def load_checkpoint(path: Path) -> tuple[dict[str, Tensor], dict[str, Any]]:
    if not Path(path).is_file():
        raise MissingFile(str(path))
    return decode_checkpoint(Path(path).read_bytes())
