"""Central finite-difference check of backward gradients."""

from __future__ import annotations

import numpy as np

from .graph import ModelGraph


def gradient_check(graph: ModelGraph, x, loss, eps: float = 1e-4, training: bool = False, seed: int = 0,
                   max_per_param: int | None = None, rng=None) -> float:
    """Max relative error between backward and central-difference gradients.

    ``loss(logits) -> (value, dlogits)``. The relative error of an entry is
    ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``. ``max_per_param`` limits
    the number of probed entries per tensor (sampled with ``rng``).
    """
    x = np.asarray(x, dtype=np.float64)

    def value():
        logits, _ = graph.forward(x, training, seed)
        return loss(logits)[0]

    graph.store.zero_grad()
    logits, cache = graph.forward(x, training, seed)
    graph.backward(cache, loss(logits)[1])
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p in graph.store:
        flat = p.value.reshape(-1)
        ad = p.grad.reshape(-1).copy()
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = rng.choice(flat.size, max_per_param, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = value()
            flat[i] = orig - eps
            fm = value()
            flat[i] = orig
            fd = (fp - fm) / (2 * eps)
            err = abs(ad[i] - fd) / max(1e-8, abs(ad[i]) + abs(fd))
            worst = max(worst, err)
    return worst
