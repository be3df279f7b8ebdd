"""Named-parameter checkpoints.

Binary layout (all integers and floats little-endian)::

    magic   8 bytes   b"PBGRUCK1"
    count   u32       number of entries
    entry*  u32 name length, UTF-8 name,
            u32 ndim, ndim x u64 dims,
            prod(dims) x f64 values (row-major)

Entries are written in sorted name order so identical parameters always give
identical bytes. The JSON form is ``{name: {"shape": [...], "values": [...]}}``
with floats written via ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import DataError
from .tensor import Tensor

MAGIC = b"PBGRUCK1"


def _arrays(params: Mapping[str, Tensor | np.ndarray]) -> dict[str, np.ndarray]:
    return {k: (v.values if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)) for k, v in params.items()}


def to_bytes(params: Mapping[str, Tensor | np.ndarray]) -> bytes:
    arrays = _arrays(params)
    chunks = [MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = arrays[name]
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def from_bytes(data: bytes) -> dict[str, np.ndarray]:
    if data[:8] != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    pos = 8
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(data, dtype="<f8", count=size, offset=pos).astype(np.float64)
            pos += 8 * size
            out[name] = values.reshape(shape)
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated or corrupt checkpoint: {exc}") from exc
    if pos != len(data):
        raise DataError("trailing bytes after checkpoint entries")
    return out


def save_binary(path, params) -> None:
    Path(path).write_bytes(to_bytes(params))


def load_binary(path) -> dict[str, np.ndarray]:
    return from_bytes(Path(path).read_bytes())


def save_json(path, params) -> None:
    arrays = _arrays(params)
    doc = {
        name: {"shape": list(arrays[name].shape), "values": [repr(float(x)) for x in arrays[name].reshape(-1)]}
        for name in sorted(arrays)
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_json(path) -> dict[str, np.ndarray]:
    doc = json.loads(Path(path).read_text())
    out = {}
    for name, entry in doc.items():
        values = np.array([float(x) for x in entry["values"]], dtype=np.float64)
        shape = tuple(entry["shape"])
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise DataError(f"checkpoint entry {name!r}: {values.size} values for shape {shape}")
        out[name] = values.reshape(shape)
    return out


def load(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if path.suffix == ".json":
        return load_json(path)
    return load_binary(path)
