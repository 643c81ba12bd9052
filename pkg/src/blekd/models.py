"""Teacher and student networks.

Teacher (6 x 100 input, time major): a cross-channel branch
(per-step dense 10 -> conv1d 40/10 -> pool 10 -> dropout 0.5 -> conv1d 40/10
-> pool 10 -> global average -> dense 10) and an LSTM branch (lstm 16 with
sequences -> flatten -> dense 10), concatenated, then dense 10 and a 4-way
output.

Students (3 x 100 input): the window is a single 100 x 3 plane; two conv2d
blocks with pooling (5, 1) along time, dense 10 with dropout 0.1, 4-way
output. With kernels spanning time only, (k, 1), the three variants have
exactly 754, 1824 and 4594 parameters.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    LSTM,
    Concat,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool1D,
    MaxPool1D,
    MaxPool2D,
    ModelGraph,
    ReLU,
    Sequential,
)

N_CLASSES = 4
WINDOW = 100
STUDENT_VARIANTS = {1: (5, 3), 2: (10, 5), 3: (20, 5)}  # filters, kernel

STUDENT_TARGETS = {1: 754, 2: 1824, 3: 4594}
PUBLISHED_TEACHER_COUNTS = (4594, 20416)
PUBLISHED_RATIOS = {1: 27.07, 2: 11.19, 3: 4.44}


def cross_channel_branch() -> Sequential:
    return Sequential([
        Dense(10), ReLU(),
        Conv1D(40, 10), ReLU(), MaxPool1D(10), Dropout(0.5),
        Conv1D(40, 10), ReLU(), MaxPool1D(10), GlobalAvgPool1D(),
        Dense(10), ReLU(),
    ])


def causality_branch() -> Sequential:
    return Sequential([LSTM(16, return_sequences=True), Flatten(), Dense(10), ReLU()])


def build_teacher(seed: int = 0, channels: int = 6, with_lstm: bool = True) -> ModelGraph:
    branches = [cross_channel_branch()] + ([causality_branch()] if with_lstm else [])
    body = [Concat(branches), Dense(10), ReLU(), Dense(N_CLASSES)]
    return ModelGraph("teacher", (WINDOW, channels), body, seed=seed, n_classes=N_CLASSES)


def build_student(variant: int, seed: int = 0, kernel_layout: str = "time") -> ModelGraph:
    """Student ``variant`` in {1, 2, 3}.

    ``kernel_layout="time"`` uses (k, 1) kernels; ``"square"`` uses (k, k).
    """
    if variant not in STUDENT_VARIANTS:
        raise ValueError(f"student variant must be 1, 2 or 3, got {variant!r}")
    if kernel_layout not in ("time", "square"):
        raise ValueError(f"unknown kernel layout {kernel_layout!r}")
    filters, k = STUDENT_VARIANTS[variant]
    kernel = (k, 1) if kernel_layout == "time" else (k, k)
    body = [
        Conv2D(filters, kernel), ReLU(), MaxPool2D((5, 1)), Dropout(0.2),
        Conv2D(filters, kernel), ReLU(), MaxPool2D((5, 1)), Flatten(),
        Dense(10), ReLU(), Dropout(0.1),
        Dense(N_CLASSES),
    ]
    name = f"student{variant}" if kernel_layout == "time" else f"student{variant}_square"
    return ModelGraph(name, (WINDOW, 3, 1), body, seed=seed, n_classes=N_CLASSES)


def build_model(kind: str, seed: int = 0) -> ModelGraph:
    """``teacher``, ``baseline<v>`` or ``distilled<v>``; students share one graph per variant."""
    if kind == "teacher":
        return build_teacher(seed)
    for prefix in ("baseline", "distilled", "student"):
        if kind.startswith(prefix):
            return build_student(int(kind[len(prefix):]), seed)
    raise ValueError(f"unknown model kind {kind!r}")


def to_model_input(graph: ModelGraph, windows) -> np.ndarray:
    """(N, channels, 100) windows to the graph's input layout, float64."""
    x = np.asarray(windows, dtype=np.float64).transpose(0, 2, 1)
    if len(graph.input_shape) == 3:
        x = x[..., None]
    return np.ascontiguousarray(x)


def param_audit() -> dict:
    """Per-layer counts and totals for every model against the published figures."""
    teacher = build_teacher()
    concat = teacher.body.layers[0]
    out = {
        "teacher": {
            "layers": {name: layer.n_params for name, layer in teacher.body.walk()},
            "total": teacher.param_count,
            "branch_cross_channel": concat.branches[0].n_params,
            "branch_causality": concat.branches[1].n_params,
            "published": list(PUBLISHED_TEACHER_COUNTS),
            "note": (
                "the published teacher figures disagree with each other (4594 equals the largest "
                "student, 20416 matches the stated ratios); the layer tables give the total above"
            ),
        },
        "students": {},
    }
    for v in (1, 2, 3):
        s = build_student(v)
        sq = build_student(v, kernel_layout="square")
        out["students"][str(v)] = {
            "layers": {name: layer.n_params for name, layer in s.body.walk()},
            "total": s.param_count,
            "target": STUDENT_TARGETS[v],
            "difference": s.param_count - STUDENT_TARGETS[v],
            "square_kernel_total": sq.param_count,
            "ratio_vs_teacher": teacher.param_count / s.param_count,
            "ratio_vs_20416": PUBLISHED_TEACHER_COUNTS[1] / s.param_count,
            "published_ratio": PUBLISHED_RATIOS[v],
        }
    return out


def audit_text(audit: dict | None = None) -> str:
    a = audit or param_audit()
    t = a["teacher"]
    lines = [
        "parameter audit",
        f"  teacher total {t['total']} (cross-channel {t['branch_cross_channel']}, "
        f"causality {t['branch_causality']}); published {t['published'][0]} and {t['published'][1]}",
        f"  note: {t['note']}",
    ]
    for v, s in a["students"].items():
        lines.append(
            f"  student {v}: {s['total']} (target {s['target']}, diff {s['difference']:+d}; "
            f"square kernels would give {s['square_kernel_total']}); teacher/student "
            f"{s['ratio_vs_teacher']:.2f}, 20416/student {s['ratio_vs_20416']:.2f}, published {s['published_ratio']}"
        )
    return "\n".join(lines)
