"""Adam and Adadelta updates over a ParamStore."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamStore


@dataclass
class Adam:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def step(self, store: ParamStore) -> None:
        store.step += 1
        t = store.step
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p in store:
            m = p.state.setdefault("m", np.zeros_like(p.value))
            v = p.state.setdefault("v", np.zeros_like(p.value))
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Adadelta:
    lr: float = 0.9
    rho: float = 0.95
    eps: float = 1e-7

    def step(self, store: ParamStore) -> None:
        store.step += 1
        for p in store:
            eg = p.state.setdefault("acc_grad", np.zeros_like(p.value))
            ed = p.state.setdefault("acc_delta", np.zeros_like(p.value))
            eg *= self.rho
            eg += (1.0 - self.rho) * p.grad ** 2
            delta = np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * p.grad
            ed *= self.rho
            ed += (1.0 - self.rho) * delta ** 2
            p.value -= self.lr * delta


def adam_step(store: ParamStore, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7) -> ParamStore:
    Adam(lr, beta1, beta2, eps).step(store)
    return store


def adadelta_step(store: ParamStore, lr=0.9, rho=0.95, eps=1e-7) -> ParamStore:
    Adadelta(lr, rho, eps).step(store)
    return store


def make_optimizer(name: str, lr: float | None = None):
    name = name.lower()
    if name == "adam":
        return Adam(lr=0.001 if lr is None else lr)
    if name == "adadelta":
        return Adadelta(lr=0.9 if lr is None else lr)
    raise ValueError(f"unknown optimizer {name!r}")
