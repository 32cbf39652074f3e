"""Checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"SPANRE\\x00\\x01"
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header, keys sorted, compact separators
    ...       float64 arrays, C order, concatenated in header ``tensors`` order

The header holds ``format_version``, ``model_config``, ``train_config``,
``seed``, ``vocab``, ``chars``, ``relations``, ``metadata`` and a
``tensors`` list of ``{"name", "shape", "offset", "count"}`` where offset
and count are in float64 elements from the start of the data block.
Writing is deterministic, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelConfig, ModelParams, Vocab
from .tensor import Tensor

MAGIC = b"SPANRE\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    train_config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    entries, blobs, offset = [], [], 0
    for name, t in p.tensors.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": p.config.to_dict(),
        "train_config": ckpt.train_config,
        "seed": ckpt.seed,
        "vocab": p.vocab.itos,
        "chars": p.chars.itos,
        "relations": p.relations,
        "metadata": ckpt.metadata,
        "tensors": entries,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf8")
    return MAGIC + struct.pack("<Q", len(raw)) + raw + b"".join(blobs)


def from_bytes(buf: bytes) -> Checkpoint:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", buf[8:16])
    header = json.loads(buf[16:16 + hlen].decode("utf8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    data = np.frombuffer(buf, dtype="<f8", offset=16 + hlen)
    tensors = {}
    for e in header["tensors"]:
        arr = data[e["offset"]:e["offset"] + e["count"]]
        if arr.size != e["count"]:
            raise CheckpointError(f"checkpoint truncated in tensor {e['name']}")
        tensors[e["name"]] = Tensor(arr.reshape(e["shape"]), requires_grad=True)
    params = ModelParams(
        config=ModelConfig.from_dict(header["model_config"]),
        vocab=Vocab.from_list(header["vocab"]),
        chars=Vocab.from_list(header["chars"]),
        relations=list(header["relations"]),
        tensors=tensors,
    )
    return Checkpoint(params=params, train_config=header["train_config"], seed=header["seed"],
                      metadata=header["metadata"])


def save(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
