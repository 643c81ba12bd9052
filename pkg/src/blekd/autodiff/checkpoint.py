"""Binary parameter checkpoints ("BSPC").

Layout, little endian: magic ``BSPC``, u16 version, 32-byte SHA-256 graph
hash, u32 record count; then per parameter: u16 name length, UTF-8 name,
u8 ndim, u32 per dimension, raw float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .graph import ModelGraph

MAGIC = b"BSPC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(graph: ModelGraph, values: dict[str, np.ndarray] | None = None) -> bytes:
    values = values if values is not None else {p.name: p.value for p in graph.store}
    out = [MAGIC, struct.pack("<H", VERSION), graph.graph_hash(), struct.pack("<I", len(values))]
    for p in graph.store:
        v = np.asarray(values[p.name], dtype="<f8")
        name = p.name.encode("utf-8")
        out.append(struct.pack("<H", len(name)) + name)
        out.append(struct.pack("<B", v.ndim) + struct.pack(f"<{v.ndim}I", *v.shape))
        out.append(np.ascontiguousarray(v).tobytes())
    return b"".join(out)


def loads(graph: ModelGraph, blob: bytes) -> None:
    """Load parameter values into ``graph``; the graph hash must match."""
    if blob[:4] != MAGIC:
        raise CheckpointError("not a parameter checkpoint")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    ghash = blob[6:38]
    if ghash != graph.graph_hash():
        raise CheckpointError(f"checkpoint was written for a different graph than {graph.name!r}")
    (count,) = struct.unpack_from("<I", blob, 38)
    off = 42
    values = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nl].decode("utf-8")
        off += nl
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        values[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        off += 8 * n
    graph.store.load(values)


def save(graph: ModelGraph, path, values=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(graph, values))
    return path


def load(graph: ModelGraph, path) -> ModelGraph:
    loads(graph, Path(path).read_bytes())
    return graph
