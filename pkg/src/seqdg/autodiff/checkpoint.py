"""Parameter checkpoints: one JSON header line, then raw little-endian payloads in header order."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .tensor import resolve_dtype

MAGIC = "seqdg-checkpoint/1"


def save_checkpoint(path, named_arrays: dict, precision="f32") -> None:
    dtype = resolve_dtype(precision).newbyteorder("<")
    tag = "f32" if dtype.itemsize == 4 else "f64"
    header = {"format": MAGIC, "precision": tag, "byte_order": "little",
              "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in named_arrays.items()]}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for arr in named_arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def load_checkpoint(path) -> dict:
    raw = Path(path).read_bytes()
    line_end = raw.index(b"\n")
    header = json.loads(raw[:line_end].decode("utf-8"))
    if header.get("format") != MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    dtype = np.dtype("<f4" if header["precision"] == "f32" else "<f8")
    offset = line_end + 1
    out = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        out[entry["name"]] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += count * dtype.itemsize
    if offset != len(raw):
        raise ContractError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return out
