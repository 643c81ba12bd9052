"""Leave-one-session-out folds, confusion matrices, macro F1 and experiment reports."""

from __future__ import annotations

import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding

log = logging.getLogger(__name__)

N_CLASSES = 4


class PlanError(ValueError):
    pass


@dataclass
class FoldPlan:
    folds: list[tuple[list[tuple[int, int]], list[tuple[int, int]]]]  # (train, test) session pairs
    always_train: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "folds": [{"train": [list(p) for p in tr], "test": [list(p) for p in te]} for tr, te in self.folds],
            "always_train": [list(p) for p in self.always_train],
        }


def make_folds(sessions, n_folds: int = 5) -> FoldPlan:
    """Fold k tests the k-th session (by id order) of every participant with exactly ``n_folds`` sessions.

    ``sessions`` is an iterable of (participant_id, session_id) pairs or
    objects with those attributes. Participants with fewer sessions are
    always in the training sets; more than ``n_folds`` is an error.
    """
    by_participant = defaultdict(set)
    for s in sessions:
        if isinstance(s, tuple):
            p, sid = s
        else:
            p, sid = s.participant_id, s.session_id
        by_participant[int(p)].add(int(sid))
    full, short = {}, []
    for p in sorted(by_participant):
        ids = sorted(by_participant[p])
        if len(ids) > n_folds:
            raise PlanError(f"participant {p} has {len(ids)} sessions (> {n_folds})")
        if len(ids) == n_folds:
            full[p] = ids
        else:
            short += [(p, s) for s in ids]
    folds = []
    for k in range(n_folds):
        test = [(p, ids[k]) for p, ids in full.items()]
        train = [(p, s) for p, ids in full.items() for s in ids if s != ids[k]] + short
        folds.append((sorted(train), test))
    return FoldPlan(folds, short)


def confusion_matrix(preds, truths) -> np.ndarray:
    """4x4 counts, rows = true class, columns = predicted class (ids 1..4)."""
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise ValueError(f"length mismatch {preds.shape} vs {truths.shape}")
    for arr in (preds, truths):
        if arr.size and (arr.min() < 1 or arr.max() > N_CLASSES):
            raise ValueError("class ids must lie in 1..4")
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (truths - 1, preds - 1), 1)
    return cm


def macro_f1(cm) -> float:
    cm = np.asarray(cm, dtype=float)
    if cm.sum() == 0:
        raise ValueError("macro F1 of an empty confusion matrix")
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred > 0, tp / pred, 0.0)
        recall = np.where(true > 0, tp / true, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return float(f1.mean())


def _segments(start_t, segment_s, win_s, t0):
    centers = np.asarray(start_t, dtype=float) + win_s / 2.0
    t0 = float(np.min(start_t)) if t0 is None else float(t0)
    return np.floor((centers - t0) / segment_s + 1e-9).astype(np.int64)


def aggregate_10s(start_t, probs, segment_s: float = 10.0, win_s: float = 2.0, t0: float | None = None):
    """Majority vote of window predictions per non-overlapping segment.

    Windows belong to the segment containing their center; segments are
    anchored at ``t0`` (default: first window start). Ties go to the tied
    class with the highest mean probability over the segment's windows,
    then to the lowest class id.
    Returns (segment indices, segment classes 1..4, number of empty segments).
    """
    probs = np.asarray(probs, dtype=float)
    if len(probs) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), 0
    if np.any(np.diff(start_t) < 0):
        raise ValueError("windows must be sorted by start time")
    seg = _segments(start_t, segment_s, win_s, t0)
    votes = np.argmax(probs, axis=1)
    ids = np.unique(seg)
    classes = np.empty(len(ids), dtype=np.int64)
    for j, s in enumerate(ids):
        m = seg == s
        counts = np.bincount(votes[m], minlength=N_CLASSES)
        tied = np.flatnonzero(counts == counts.max())
        if len(tied) > 1:
            mean_p = probs[m].mean(axis=0)[tied]
            # equal means (up to rounding) fall back to the lowest class id
            tied = tied[mean_p >= mean_p.max() - 1e-12]
        classes[j] = tied[0] + 1
    n_empty = int(ids.max() - ids.min() + 1 - len(ids))
    if n_empty:
        warnings.warn(f"{n_empty} empty segments skipped", stacklevel=2)
    return ids, classes, n_empty


def segment_truth(start_t, labels, segment_s: float = 10.0, win_s: float = 2.0, t0: float | None = None):
    """Majority window label per segment (lowest class id on ties)."""
    seg = _segments(start_t, segment_s, win_s, t0)
    ids = np.unique(seg)
    out = np.empty(len(ids), dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    for j, s in enumerate(ids):
        out[j] = np.argmax(np.bincount(labels[seg == s] - 1, minlength=N_CLASSES)) + 1
    return ids, out


def evaluate_predictions(ds, probs) -> dict:
    """2 s and 10 s confusion matrices and macro F1 for one model on a test dataset."""
    probs = np.asarray(probs, dtype=float)
    preds = np.argmax(probs, axis=1) + 1
    cm2 = confusion_matrix(preds, ds.labels)
    p10, t10 = [], []
    for p, s in ds.sessions():
        m = np.flatnonzero((ds.participant == p) & (ds.session == s))
        m = m[np.argsort(ds.start_t[m], kind="stable")]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, cls, _ = aggregate_10s(ds.start_t[m], probs[m])
        _, truth = segment_truth(ds.start_t[m], ds.labels[m])
        p10.append(cls)
        t10.append(truth)
    cm10 = confusion_matrix(np.concatenate(p10), np.concatenate(t10))
    return {
        "f1_2s": macro_f1(cm2),
        "f1_10s": macro_f1(cm10),
        "cm_2s": cm2.tolist(),
        "cm_10s": cm10.tolist(),
        "n_windows": int(cm2.sum()),
        "n_segments": int(cm10.sum()),
    }


def summarize(fold_results: dict[str, list[dict]]) -> dict:
    """Average per-fold metrics per model (unweighted across folds)."""
    out = {}
    for name, folds in fold_results.items():
        out[name] = {
            "folds": folds,
            "mean_f1_2s": float(np.mean([f["f1_2s"] for f in folds])),
            "mean_f1_10s": float(np.mean([f["f1_10s"] for f in folds])),
            "mean_cm_2s": np.mean([f["cm_2s"] for f in folds], axis=0).tolist(),
            "mean_cm_10s": np.mean([f["cm_10s"] for f in folds], axis=0).tolist(),
        }
    return out


MODEL_ORDER = ("teacher", "baseline1", "baseline2", "baseline3", "distilled1", "distilled2", "distilled3")

PUBLISHED_F1 = {  # published 2 s / 10 s macro F1 (%), private dataset
    "teacher": (79.85, 84.41),
    "baseline1": (58.10, 60.19),
    "baseline2": (59.48, 61.91),
    "baseline3": (59.10, 62.31),
    "distilled1": (67.08, 72.84),
    "distilled2": (67.79, 73.17),
    "distilled3": (70.96, 76.04),
}


def report_table(report: dict) -> str:
    lines = [
        "macro F1 (%), mean over folds; published values come from a private dataset and are",
        "not comparable in absolute terms",
        f"{'model':<12}{'2 s':>8}{'10 s':>8}{'published 2 s':>16}{'published 10 s':>16}",
    ]
    for name in MODEL_ORDER:
        if name not in report["models"]:
            continue
        m = report["models"][name]
        p2, p10 = PUBLISHED_F1[name]
        lines.append(f"{name:<12}{100 * m['mean_f1_2s']:>8.2f}{100 * m['mean_f1_10s']:>8.2f}{p2:>16.2f}{p10:>16.2f}")
    lines.append(f"config hash {report['config_hash']}  master seed {report['master_seed']}")
    return "\n".join(lines)


def cm_to_csv(cm) -> str:
    rows = ["true\\pred,1,2,3,4"]
    for i, row in enumerate(cm, 1):
        rows.append(",".join([str(i)] + [repr(float(v)) if isinstance(v, float) else str(v) for v in row]))
    return "\n".join(rows) + "\n"


def cm_to_pgm(cm, cell: int = 16) -> bytes:
    """Binary PGM heatmap of a confusion matrix, rows normalized, dark = high."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    img = (255 - np.round(255 * norm)).astype(np.uint8)
    img = np.kron(img, np.ones((cell, cell), dtype=np.uint8))
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def write_report(report: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "report.txt").write_text(report_table(report) + "\n")
    for name, m in report["models"].items():
        for g in ("2s", "10s"):
            (out / f"cm_{name}_{g}.csv").write_text(cm_to_csv(m[f"mean_cm_{g}"]))
            (out / f"cm_{name}_{g}.pgm").write_bytes(cm_to_pgm(m[f"mean_cm_{g}"]))
    return out / "report.json"
