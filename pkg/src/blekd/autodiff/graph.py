"""Layer graphs: sequences, parallel branches joined by concatenation."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .layers import Layer, ShapeError
from .params import ParamStore


class UsageError(RuntimeError):
    pass


class Sequential:
    kind = "sequential"

    def __init__(self, layers, name: str = "seq"):
        self.layers = list(layers)
        self.name = name

    def build(self, in_shape, store, prefix, rng):
        shape = tuple(in_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, store, f"{prefix}{i}.{layer.kind}", rng)
            except ShapeError as exc:
                raise ShapeError(f"layer {prefix}{i} ({layer.kind}): {exc}") from None
        self.in_shape, self.out_shape = tuple(in_shape), shape
        return shape

    def forward(self, x, training, rng):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, training, rng)
            caches.append(c)
        return x, caches

    def backward(self, dy, caches, need_dx=True):
        last = len(self.layers) - 1
        for k, (layer, c) in enumerate(zip(reversed(self.layers), reversed(caches))):
            dy = layer.backward(dy, c, need_dx=need_dx or k < last)
        return dy

    def walk(self, prefix=""):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, (Sequential, Concat)):
                yield from layer.walk(f"{prefix}{i}.")
            else:
                yield f"{prefix}{i}.{layer.kind}", layer

    def config(self):
        return {"kind": self.kind, "layers": [layer.config() for layer in self.layers]}

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]


class Concat:
    """Feed one input to several branches and concatenate their (N, F) outputs."""

    kind = "concat"

    def __init__(self, branches):
        self.branches = list(branches)

    def build(self, in_shape, store, prefix, rng):
        widths = []
        for j, br in enumerate(self.branches):
            out = br.build(in_shape, store, f"{prefix}b{j}.", rng)
            if len(out) != 1:
                raise ShapeError(f"branch {j} must end in a flat feature vector, got {out}")
            widths.append(out[0])
        self.widths = widths
        self.in_shape, self.out_shape = tuple(in_shape), (sum(widths),)
        return self.out_shape

    def forward(self, x, training, rng):
        outs, caches = [], []
        for br in self.branches:
            y, c = br.forward(x, training, rng)
            outs.append(y)
            caches.append(c)
        return np.concatenate(outs, axis=-1), caches

    def backward(self, dy, caches, need_dx=True):
        dx = None
        start = 0
        for br, w, c in zip(self.branches, self.widths, caches):
            g = br.backward(dy[:, start:start + w], c, need_dx)
            if need_dx:
                dx = g if dx is None else dx + g
            start += w
        return dx

    def walk(self, prefix=""):
        for j, br in enumerate(self.branches):
            yield from br.walk(f"{prefix}b{j}.")

    def config(self):
        return {"kind": self.kind, "branches": [b.config() for b in self.branches]}

    @property
    def n_params(self) -> int:
        return sum(b.n_params for b in self.branches)

    @property
    def params(self):
        return [p for b in self.branches for p in b.params]


class ModelGraph:
    """A built network: input spec, layer body and its parameter store."""

    def __init__(self, name: str, input_shape, body, seed: int = 0, n_classes: int | None = None):
        self.name = name
        self.input_shape = tuple(input_shape)
        self.body = body if isinstance(body, Sequential) else Sequential(body)
        self.store = ParamStore()
        self.seed = int(seed)
        self.output_shape = self.body.build(self.input_shape, self.store, "", np.random.default_rng(seed))
        if n_classes is not None and self.output_shape != (n_classes,):
            raise ShapeError(f"graph output {self.output_shape} is not ({n_classes},)")

    @property
    def param_count(self) -> int:
        return self.store.n_params()

    def config(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "body": self.body.config()}

    def graph_hash(self) -> bytes:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()

    def forward(self, x, training: bool = False, seed: int = 0):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"layer 0: input shape {x.shape[1:]} does not match {self.input_shape}")
        rng = np.random.default_rng(seed) if training else None
        y, caches = self.body.forward(x, training, rng)
        return y, caches

    def backward(self, cache, dlogits, need_dx: bool = False):
        """Accumulate parameter gradients; returns d(input) only if ``need_dx``."""
        if cache is None:
            raise UsageError("backward needs the cache from a forward pass")
        return self.body.backward(np.asarray(dlogits, dtype=np.float64), cache, need_dx)

    def predict_logits(self, x, batch_size: int = 512) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0,) + self.output_shape)

    def summary(self) -> str:
        rows = [("layer", "output shape", "params")]
        for name, layer in self.body.walk():
            rows.append((name, str(layer.out_shape), str(layer.n_params)))
        w0 = max(len(r[0]) for r in rows)
        w1 = max(len(r[1]) for r in rows)
        lines = [f"model {self.name}  input {self.input_shape}"]
        lines += [f"{a:<{w0}}  {b:<{w1}}  {c:>8}" for a, b, c in rows]
        lines.append(f"total parameters: {self.param_count}")
        return "\n".join(lines)


def forward(graph: ModelGraph, x, training: bool = False, seed: int = 0):
    return graph.forward(x, training, seed)


def backward(graph: ModelGraph, cache, dlogits, need_dx: bool = False):
    return graph.backward(cache, dlogits, need_dx)


def param_count(graph) -> int:
    if graph is None:
        return 0
    if isinstance(graph, ModelGraph):
        return graph.param_count
    return graph.n_params
