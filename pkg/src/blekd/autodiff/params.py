"""Named parameter tensors with gradient buffers and optimizer slots."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    state: dict = field(default_factory=dict)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return int(self.value.size)


class ParamStore:
    def __init__(self):
        self._params: "OrderedDict[str, Param]" = OrderedDict()
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Param(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self:
            p.grad.fill(0.0)

    def n_params(self) -> int:
        return sum(p.size for p in self)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for name, v in values.items():
            p = self._params[name]
            if p.value.shape != np.shape(v):
                raise ValueError(f"shape mismatch for {name}: {np.shape(v)} vs {p.value.shape}")
            p.value[...] = v

    def reset_state(self) -> None:
        self.step = 0
        for p in self:
            p.state.clear()
