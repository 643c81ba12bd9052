"""Cohort generation and the full cross-validated teacher / baseline / distillation experiment."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import seeding
from .autodiff import checkpoint
from .autodiff.functional import softmax
from .config import ExperimentConfig
from .distill import train_baseline_student, train_distilled_student, train_teacher
from .evaluate import MODEL_ORDER, FoldPlan, evaluate_predictions, make_folds, summarize
from .models import param_audit, to_model_input
from .signal import STUDENT, TEACHER, WindowDataset, preprocess_session
from .sim import SessionRecording, build_factory_map, generate_session

log = logging.getLogger(__name__)


class FoldError(RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        super().__init__(f"fold {fold} failed: {type(cause).__name__}: {cause}")
        self.fold = fold


def cohort_sessions(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    """(participant, session) pairs: full participants first, then the short ones."""
    c = cfg.cohort
    pairs = [(p, s) for p in range(c.n_full) for s in range(c.sessions)]
    for j in range(c.n_short):
        n = c.short_sessions[j % len(c.short_sessions)]
        pairs += [(c.n_full + j, s) for s in range(n)]
    return pairs


def session_plan(cfg: ExperimentConfig, participant: int, session: int) -> list[int]:
    if cfg.scenario.plan is not None:
        return list(cfg.scenario.plan)
    rng = seeding.rng_for(cfg.seed, "plan", participant, session)
    return [int(m) for m in rng.permutation([1, 2, 3, 4])]


def simulate_session(cfg: ExperimentConfig, participant: int, session: int) -> SessionRecording:
    sc = cfg.scenario
    return generate_session(
        seeding.derive(cfg.seed, "participant", participant, "session", session),
        build_factory_map(sc.map),
        session_plan(cfg, participant, session),
        cfg.cohort.duration_s,
        sc.radio,
        sc.ultrasound,
        participant_id=participant,
        session_id=session,
        walk=sc.walk,
        config_hash=cfg.config_hash(),
    )


def generate_cohort(cfg: ExperimentConfig) -> list[SessionRecording]:
    return [simulate_session(cfg, p, s) for p, s in cohort_sessions(cfg)]


def preprocess_cohort(recordings, cfg: ExperimentConfig) -> WindowDataset:
    """Teacher-mode windows for all sessions; the student view is its first three channels."""
    parts = [preprocess_session(r, TEACHER, cfg.preprocess) for r in recordings]
    ds = WindowDataset.concat(parts)
    ds.config_hash = cfg.config_hash()
    return ds


def model_seed(cfg: ExperimentConfig, fold: int, name: str) -> int:
    return seeding.derive(cfg.seed, "fold", fold, name)


def stamp(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "master_seed": cfg.seed}


def train_fold(cfg: ExperimentConfig, fold: int, train_ds: WindowDataset, models_dir=None,
               only=None, teacher=None):
    """Train the models of one fold; returns {name: (graph, history)} in training order.

    ``only`` restricts the model names. Distilled students use ``teacher`` if
    given, otherwise a teacher trained here first.
    """
    wanted = set(only) if only is not None else {"teacher"} | {f"{k}{v}" for v in cfg.variants
                                                                 for k in ("baseline", "distilled")}
    out = {}
    t0 = time.perf_counter()
    if "teacher" in wanted or (teacher is None and any(n.startswith("distilled") for n in wanted)):
        teacher, hist = train_teacher(train_ds, replace(cfg.teacher, seed=model_seed(cfg, fold, "teacher")))
        out["teacher"] = (teacher, hist)
    for v in cfg.variants:
        name = f"baseline{v}"
        if name in wanted:
            out[name] = train_baseline_student(train_ds, v, replace(cfg.baseline, seed=model_seed(cfg, fold, name)))
    student_ds = train_ds.student_view()
    for v in cfg.variants:
        name = f"distilled{v}"
        if name in wanted:
            kd = replace(cfg.kd, seed=model_seed(cfg, fold, name))
            out[name] = train_distilled_student(teacher, train_ds, student_ds, v, kd)
    log.info("fold %d trained %d models in %.1f s", fold, len(out), time.perf_counter() - t0)
    if models_dir is not None:
        save_fold_models(out, models_dir, stamp(cfg))
    return out


def save_fold_models(models: dict, directory, tags: dict) -> None:
    """Checkpoint, CSV history and a JSON record (history plus ``tags``) per model."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, (graph, hist) in models.items():
        checkpoint.save(graph, d / f"{name}.bspc")
        (d / f"{name}_history.csv").write_text(hist.to_csv())
        record = {**tags, "model": name, "graph_hash": graph.graph_hash().hex(), "history": hist.to_dict()}
        (d / f"{name}.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")


def predict_proba(graph, ds: WindowDataset) -> np.ndarray:
    view = ds.student_view() if graph.name.startswith("student") else ds
    return softmax(graph.predict_logits(to_model_input(graph, view.windows)))


def evaluate_fold(models: dict, test_ds: WindowDataset) -> dict:
    return {name: evaluate_predictions(test_ds, predict_proba(g, test_ds)) for name, g in models.items()}


def _run_fold(cfg, k, plan, ds, models_root):
    train_pairs, test_pairs = plan.folds[k]
    try:
        trained = train_fold(cfg, k, ds.select_sessions(train_pairs),
                             None if models_root is None else Path(models_root) / f"fold{k}")
        metrics = evaluate_fold({n: g for n, (g, _) in trained.items()}, ds.select_sessions(test_pairs))
    except Exception as exc:
        raise FoldError(k, exc) from exc
    return metrics, {n: h.to_dict() for n, (_, h) in trained.items()}


def build_report(cfg: ExperimentConfig, plan: FoldPlan, fold_metrics: list[dict], histories=None) -> dict:
    per_model = {name: [fm[name] for fm in fold_metrics] for name in MODEL_ORDER if name in fold_metrics[0]}
    audit = param_audit()
    return {
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.seed,
        "config": cfg.result_dict(),
        "seeds": {f"fold{k}": {n: model_seed(cfg, k, n) for n in per_model} for k in range(len(fold_metrics))},
        "fold_plan": plan.to_dict(),
        "param_counts": {
            "teacher": audit["teacher"]["total"],
            **{f"student{v}": s["total"] for v, s in audit["students"].items()},
        },
        "param_audit": audit,
        "models": summarize(per_model),
        "histories": histories or {},
    }


def run_experiment(cfg: ExperimentConfig, recordings=None, dataset: WindowDataset | None = None,
                   models_root=None) -> dict:
    """Simulate (unless given data), preprocess, train and evaluate all folds.

    Deterministic in ``cfg.seed``. Folds run in ``cfg.jobs`` processes; a
    failing fold raises :class:`FoldError` carrying its index.
    """
    if dataset is None:
        if recordings is None:
            recordings = generate_cohort(cfg)
        dataset = preprocess_cohort(recordings, cfg)
    plan = make_folds(dataset.sessions())
    n = len(plan.folds)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_fold, [cfg] * n, range(n), [plan] * n, [dataset] * n, [models_root] * n))
    else:
        results = [_run_fold(cfg, k, plan, dataset, models_root) for k in range(n)]
    histories = {f"fold{k}": h for k, (_, h) in enumerate(results)}
    return build_report(cfg, plan, [m for m, _ in results], histories)


def directional_summary(reports: list[dict], margin: float = 0.02) -> dict:
    """Per-model mean macro F1 over seeds, distilled-minus-baseline gaps and the 10 s vs 2 s count."""
    names = [n for n in MODEL_ORDER if n in reports[0]["models"]]
    mean = {
        g: {n: float(np.mean([r["models"][n][f"mean_f1_{g}"] for r in reports])) for n in names}
        for g in ("2s", "10s")
    }
    variants = sorted(int(n[-1]) for n in names if n.startswith("distilled"))
    gains = {v: mean["2s"][f"distilled{v}"] - mean["2s"][f"baseline{v}"] for v in variants}
    students = [n for n in names if n != "teacher"]
    teacher_10s_wins = sum(r["models"]["teacher"]["mean_f1_10s"] >= r["models"]["teacher"]["mean_f1_2s"]
                           for r in reports)
    return {
        "seeds": [r["master_seed"] for r in reports],
        "mean_f1": mean,
        "per_seed_f1_2s": {n: [r["models"][n]["mean_f1_2s"] for r in reports] for n in names},
        "distillation_gain_2s": {str(v): g for v, g in gains.items()},
        "gain_ok": {str(v): g >= margin for v, g in gains.items()},
        "teacher_beats_students": all(mean["2s"]["teacher"] > mean["2s"][n] for n in students),
        "teacher_10s_ge_2s_seeds": int(teacher_10s_wins),
    }
