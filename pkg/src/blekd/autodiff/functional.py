"""Softmax and the three losses, each with its gradient."""

from __future__ import annotations

import numpy as np

CLAMP = 1e-12


class LossError(ValueError):
    pass


def softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    return probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LossError(f"labels must lie in [0, {k})")
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_same(a, b):
    if a.shape != b.shape:
        raise LossError(f"shape mismatch {a.shape} vs {b.shape}")


def categorical_crossentropy(probs, onehot) -> float:
    probs, onehot = np.asarray(probs, float), np.asarray(onehot, float)
    _check_same(probs, onehot)
    return float(np.mean(-np.sum(onehot * np.log(np.maximum(probs, CLAMP)), axis=-1)))


def categorical_crossentropy_grad(probs, onehot) -> np.ndarray:
    probs, onehot = np.asarray(probs, float), np.asarray(onehot, float)
    _check_same(probs, onehot)
    n = probs.shape[0]
    return np.where(probs > CLAMP, -onehot / np.maximum(probs, CLAMP), 0.0) / n


def _sparse_check(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise LossError(f"expected logits (n, k) and labels (n,), got {logits.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LossError(f"labels must lie in [0, {logits.shape[1]})")
    return logits, labels


def sparse_ce_from_logits(logits, labels) -> float:
    logits, labels = _sparse_check(logits, labels)
    ls = log_softmax(logits)
    return float(-np.mean(ls[np.arange(len(labels)), labels]))


def sparse_ce_from_logits_grad(logits, labels) -> np.ndarray:
    logits, labels = _sparse_check(logits, labels)
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


def kld(p, q) -> float:
    """Batch mean of sum p*log(p/q); q is clamped, zero-p terms vanish."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    _check_same(p, q)
    qc = np.maximum(q, CLAMP)
    safe_p = np.where(p > 0, p, 1.0)
    terms = np.where(p > 0, p * (np.log(safe_p) - np.log(qc)), 0.0)
    return float(np.mean(np.sum(terms, axis=-1)))


def kld_grad_q(p, q) -> np.ndarray:
    p, q = np.asarray(p, float), np.asarray(q, float)
    _check_same(p, q)
    return np.where(q > CLAMP, -p / np.maximum(q, CLAMP), 0.0) / p.shape[0]


# -- (value, d/dlogits) pairs used for training and gradient checks -----------

def cce_on_logits(logits, onehot):
    """Categorical CE of softmax(logits), differentiated through the softmax."""
    probs = softmax(logits)
    g = softmax_backward(probs, categorical_crossentropy_grad(probs, onehot))
    return categorical_crossentropy(probs, onehot), g


def sparse_ce_on_logits(logits, labels):
    return sparse_ce_from_logits(logits, labels), sparse_ce_from_logits_grad(logits, labels)


def kld_on_logits(target_probs, logits, temperature: float = 1.0):
    """KLD(target || softmax(logits / T)) and its gradient w.r.t. logits."""
    q = softmax(np.asarray(logits, float) / temperature)
    g = softmax_backward(q, kld_grad_q(target_probs, q)) / temperature
    return kld(target_probs, q), g
