"""Knowledge-distillation losses and the teacher / baseline / distilled training loops."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .autodiff import ModelGraph, cce_on_logits, kld, kld_grad_q, make_optimizer, softmax, softmax_backward
from .autodiff import sparse_ce_on_logits
from .models import build_student, build_teacher, to_model_input
from .signal import STUDENT, TEACHER, WindowDataset

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    early_stop_patience: int | None = 20
    optimizer: str = "adam"
    lr: float = 0.001
    seed: int = 0
    validation_fraction: float = 0.1
    # keep every k-th training window (1 keeps all); validation is drawn first
    train_stride: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.train_stride < 1:
            raise ValueError("train_stride must be >= 1")


def teacher_config(**kw) -> TrainConfig:
    return TrainConfig(**{"optimizer": "adam", "lr": 0.001, **kw})


def baseline_config(**kw) -> TrainConfig:
    return TrainConfig(**{"optimizer": "adadelta", "lr": 0.9, **kw})


@dataclass
class KdConfig:
    alpha: float = 0.1
    temperature: float = 10.0
    epochs: int = 10
    batch_size: int = 64
    optimizer: str = "adam"
    lr: float = 0.001
    seed: int = 0
    train_stride: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.train_stride < 1:
            raise ValueError("epochs, batch_size and train_stride must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    restored: bool = False
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "best_epoch": self.best_epoch,
            "restored": self.restored,
            "stopped_early": self.stopped_early,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy"])
        for e, loss in enumerate(self.train_loss):
            acc = self.val_accuracy[e] if e < len(self.val_accuracy) else ""
            w.writerow([e, repr(loss), repr(acc) if acc != "" else ""])
        return buf.getvalue()


# -- losses -------------------------------------------------------------------

def tempered_softmax(logits, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature)


def distillation_loss(teacher_logits, student_logits, temperature: float) -> float:
    """T^2 * KLD(softmax(teacher / T) || softmax(student / T))."""
    t, s = np.asarray(teacher_logits, float), np.asarray(student_logits, float)
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {s.shape}")
    return kld(tempered_softmax(t, temperature), tempered_softmax(s, temperature)) * temperature ** 2


def distillation_loss_grad(teacher_logits, student_logits, temperature: float) -> np.ndarray:
    p = tempered_softmax(teacher_logits, temperature)
    q = tempered_softmax(student_logits, temperature)
    return softmax_backward(q, kld_grad_q(p, q)) * temperature


def total_kd_loss(sl: float, dl: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * sl + (1.0 - alpha) * dl


# -- training loops -----------------------------------------------------------

def split_validation(ds: WindowDataset, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out ``fraction`` of each session's windows at random; returns (train_idx, val_idx)."""
    rng = np.random.default_rng(seed)
    val = []
    for p, s in ds.sessions():
        idx = np.flatnonzero((ds.participant == p) & (ds.session == s))
        k = int(round(fraction * len(idx)))
        if k:
            val.append(np.sort(rng.choice(idx, k, replace=False)))
    val_idx = np.concatenate(val) if val else np.zeros(0, dtype=np.int64)
    mask = np.ones(len(ds), dtype=bool)
    mask[val_idx] = False
    return np.flatnonzero(mask), val_idx


def accuracy(graph: ModelGraph, x, labels0) -> float:
    if len(x) == 0:
        return float("nan")
    return float(np.mean(np.argmax(graph.predict_logits(x), axis=1) == labels0))


def _epoch(graph, optimizer, x, batch_size, rng, batch_loss):
    """One shuffled pass; ``batch_loss(logits, idx) -> (value, dlogits)``."""
    perm = rng.permutation(len(x))
    total, count = 0.0, 0
    for start in range(0, len(perm), batch_size):
        idx = perm[start:start + batch_size]
        graph.store.zero_grad()
        logits, cache = graph.forward(x[idx], training=True, seed=int(rng.integers(2**63)))
        value, grad = batch_loss(logits, idx)
        graph.backward(cache, grad)
        optimizer.step(graph.store)
        total += value * len(idx)
        count += len(idx)
    return total / count


def fit(graph: ModelGraph, x, labels0, cfg: TrainConfig, x_val=None, y_val=None, loss: str = "cce") -> TrainHistory:
    """Minibatch training with early stopping on validation accuracy.

    ``loss`` is ``"cce"`` (categorical CE on softmax outputs) or ``"sparse"``
    (sparse CE on logits). Without validation data, every epoch runs and no
    weights are restored.
    """
    if len(x) < cfg.batch_size:
        raise TrainingError(f"{len(x)} training windows do not fill one batch of {cfg.batch_size}")
    onehot = np.eye(graph.output_shape[0])[labels0]
    if loss == "cce":
        batch_loss = lambda z, idx: cce_on_logits(z, onehot[idx])  # noqa: E731
    elif loss == "sparse":
        batch_loss = lambda z, idx: sparse_ce_on_logits(z, labels0[idx])  # noqa: E731
    else:
        raise ValueError(f"unknown loss {loss!r}")
    opt = make_optimizer(cfg.optimizer, cfg.lr)
    rng = seeding.rng_for(cfg.seed, "shuffle")
    hist = TrainHistory()
    use_val = x_val is not None and len(x_val) > 0
    best, best_params, wait = -np.inf, None, 0
    for epoch in range(cfg.epochs):
        hist.train_loss.append(_epoch(graph, opt, x, cfg.batch_size, rng, batch_loss))
        if not use_val:
            continue
        acc = accuracy(graph, x_val, y_val)
        hist.val_accuracy.append(acc)
        if acc > best:
            best, best_params, wait = acc, graph.store.snapshot(), 0
            hist.best_epoch = epoch
        else:
            wait += 1
            if cfg.early_stop_patience is not None and wait >= cfg.early_stop_patience:
                hist.stopped_early = True
                break
        log.debug("%s epoch %d loss %.4f val_acc %.4f", graph.name, epoch, hist.train_loss[-1], acc)
    if best_params is not None:
        graph.store.load(best_params)
        hist.restored = True
    return hist


def _prepared(graph, ds: WindowDataset, idx):
    return to_model_input(graph, ds.windows[idx]), ds.labels[idx] - 1


def _train_classifier(graph: ModelGraph, ds: WindowDataset, cfg: TrainConfig):
    tr, va = split_validation(ds, cfg.validation_fraction, seeding.derive(cfg.seed, "validation"))
    tr = tr[::cfg.train_stride]
    x, y = _prepared(graph, ds, tr)
    xv, yv = _prepared(graph, ds, va)
    return graph, fit(graph, x, y, cfg, xv, yv, loss="cce")


def train_teacher(ds: WindowDataset, cfg: TrainConfig | None = None) -> tuple[ModelGraph, TrainHistory]:
    cfg = cfg or teacher_config()
    if ds.mode != TEACHER:
        raise TrainingError("the teacher needs a teacher-mode (6 channel) dataset")
    return _train_classifier(build_teacher(seeding.derive(cfg.seed, "init")), ds, cfg)


def train_baseline_student(ds: WindowDataset, variant: int, cfg: TrainConfig | None = None):
    cfg = cfg or baseline_config()
    ds = ds.student_view()
    return _train_classifier(build_student(variant, seeding.derive(cfg.seed, "init")), ds, cfg)


def check_alignment(teacher_ds: WindowDataset, student_ds: WindowDataset) -> None:
    if len(teacher_ds) != len(student_ds):
        raise AlignmentError(f"{len(teacher_ds)} teacher windows vs {len(student_ds)} student windows")
    if not (np.array_equal(teacher_ds.labels, student_ds.labels)
            and np.array_equal(teacher_ds.participant, student_ds.participant)
            and np.array_equal(teacher_ds.session, student_ds.session)
            and np.array_equal(teacher_ds.start_t, student_ds.start_t)):
        raise AlignmentError("teacher and student windows are not aligned")


def train_distilled_student(
    teacher: ModelGraph,
    teacher_ds: WindowDataset,
    student_ds: WindowDataset,
    variant: int,
    kd: KdConfig | None = None,
) -> tuple[ModelGraph, TrainHistory]:
    """Train a student on alpha * sparse CE + (1 - alpha) * distillation loss.

    Teacher logits come from inference-mode forward passes (the softmax head
    is bypassed) and are computed once, since the teacher is frozen.
    """
    kd = kd or KdConfig()
    student_ds = student_ds.student_view()
    check_alignment(teacher_ds, student_ds)
    idx = np.arange(len(student_ds))[::kd.train_stride]
    graph = build_student(variant, seeding.derive(kd.seed, "init"))
    x, y = _prepared(graph, student_ds, idx)
    t_logits = teacher.predict_logits(to_model_input(teacher, teacher_ds.windows[idx]))
    if len(x) < kd.batch_size:
        raise TrainingError(f"{len(x)} training windows do not fill one batch of {kd.batch_size}")
    T, a = kd.temperature, kd.alpha

    def batch_loss(z, b):
        sl, gsl = sparse_ce_on_logits(z, y[b])
        dl = distillation_loss(t_logits[b], z, T)
        gdl = distillation_loss_grad(t_logits[b], z, T)
        return total_kd_loss(sl, dl, a), a * gsl + (1.0 - a) * gdl

    opt = make_optimizer(kd.optimizer, kd.lr)
    rng = seeding.rng_for(kd.seed, "shuffle")
    hist = TrainHistory()
    for _ in range(kd.epochs):
        hist.train_loss.append(_epoch(graph, opt, x, kd.batch_size, rng, batch_loss))
    return graph, hist


def train_logit_student(ds: WindowDataset, variant: int, kd: KdConfig) -> tuple[ModelGraph, TrainHistory]:
    """Sparse-CE student training with the distillation loop's seeds and optimizer (no teacher)."""
    ds = ds.student_view()
    idx = np.arange(len(ds))[::kd.train_stride]
    graph = build_student(variant, seeding.derive(kd.seed, "init"))
    x, y = _prepared(graph, ds, idx)
    cfg = TrainConfig(epochs=kd.epochs, batch_size=kd.batch_size, early_stop_patience=None,
                      optimizer=kd.optimizer, lr=kd.lr, seed=kd.seed)
    return graph, fit(graph, x, y, cfg, loss="sparse")
