"""Command-line entry point: ``blekd <command> [options]``.

Output layout under ``--out``::

    sessions/p00_s0/...          simulated recordings (+ manifest.json)
    datasets/{teacher,student}.bswd
    models/fold<k>/<model>.bspc  checkpoints, histories (.csv, .json)
    eval/fold<k>.json            per-fold metrics
    report/                      report.json, report.txt, confusion matrices

Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
artifact, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import experiment
from .autodiff import checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .distill import train_distilled_student
from .evaluate import MODEL_ORDER, FoldPlan, evaluate_predictions, make_folds, report_table, write_report
from .models import audit_text, build_model
from .signal import MODES, STUDENT, TEACHER, WindowDataset, load_dataset, preprocess_session, save_dataset
from .sim import list_session_dirs, read_session, write_session
from .sim.session import session_dirname

log = logging.getLogger("blekd")

EXIT_OK, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_RUNTIME = 0, 2, 3, 4


class DependencyError(RuntimeError):
    pass


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing {what}: expected {path}")
    return path


class Run:
    """Resolved configuration plus the artifact paths derived from it."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.sessions = self.out / "sessions"
        self.datasets = self.out / "datasets"
        self.models = self.out / "models"
        self.eval = self.out / "eval"
        self.report = self.out / "report"

    @property
    def tags(self) -> dict:
        return experiment.stamp(self.cfg)

    def dataset_path(self, mode: str) -> Path:
        return self.datasets / f"{mode}.bswd"

    def load(self, mode: str) -> WindowDataset:
        path = _require(self.dataset_path(mode), f"{mode} dataset (run `preprocess` first)")
        ds = load_dataset(path)
        if ds.config_hash != self.cfg.config_hash():
            raise DependencyError(f"{path} was built with config {ds.config_hash}, not {self.cfg.config_hash()}")
        return ds

    def plan(self, ds: WindowDataset) -> FoldPlan:
        return make_folds(ds.sessions())

    def folds(self, args, plan: FoldPlan) -> list[int]:
        return list(range(len(plan.folds))) if args.fold is None else [args.fold]

    def checkpoint_path(self, fold: int, name: str) -> Path:
        return self.models / f"fold{fold}" / f"{name}.bspc"

    def load_model(self, fold: int, name: str):
        path = _require(self.checkpoint_path(fold, name), f"{name} checkpoint for fold {fold}")
        return checkpoint.load(build_model(name), path)


# -- commands -----------------------------------------------------------------

def cmd_simulate(run: Run, args) -> None:
    cfg = run.cfg
    run.out.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".sessions-", dir=run.out))
    try:
        manifest = []
        for p, s in experiment.cohort_sessions(cfg):
            rec = experiment.simulate_session(cfg, p, s)
            write_session(rec, tmp)
            manifest.append({"dir": session_dirname(p, s), "participant": p, "session": s, "seed": rec.seed,
                             "duration_s": cfg.cohort.duration_s})
        (tmp / "manifest.json").write_text(json.dumps({**run.tags, "sessions": manifest}, indent=1, sort_keys=True) + "\n")
        if run.sessions.exists():
            shutil.rmtree(run.sessions)
        os.replace(tmp, run.sessions)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    for m in manifest:
        print(f"{m['dir']}  participant {m['participant']}  session {m['session']}  seed {m['seed']}")
    print(f"{len(manifest)} sessions in {run.sessions} (config {cfg.config_hash()}, seed {cfg.seed})")


def cmd_preprocess(run: Run, args) -> None:
    src = Path(args.sessions) if args.sessions else run.sessions
    dirs = list_session_dirs(src)
    if not dirs:
        raise DependencyError(f"no session directories under {src} (run `simulate` first)")
    parts = []
    for d in dirs:
        try:
            rec = read_session(d)
        except FileNotFoundError as exc:
            raise DependencyError(str(exc)) from None
        rec.config_hash = run.cfg.config_hash()
        parts.append(preprocess_session(rec, TEACHER, run.cfg.preprocess))
    teacher_ds = WindowDataset.concat(parts)
    modes = [args.mode] if args.mode else list(MODES)
    for mode in modes:
        ds = teacher_ds if mode == TEACHER else teacher_ds.student_view()
        path = save_dataset(ds, run.dataset_path(mode), run.tags)
        print(f"{mode}: {len(ds)} windows x {ds.n_channels} channels -> {path}")
    print("windows per class: " + "  ".join(f"{c}:{n}" for c, n in teacher_ds.class_counts().items()))
    for p, s in teacher_ds.sessions():
        n = int(((teacher_ds.participant == p) & (teacher_ds.session == s)).sum())
        print(f"  {session_dirname(p, s)}: {n} windows")


def _train(run: Run, args, names, needs_teacher=False) -> None:
    cfg = run.cfg
    ds = run.load(TEACHER) if (needs_teacher or "teacher" in names) else None
    student = run.load(STUDENT) if any(n != "teacher" for n in names) else None
    base = ds if ds is not None else student
    plan = run.plan(base)
    for k in run.folds(args, plan):
        train_pairs = plan.folds[k][0]
        tr_t = ds.select_sessions(train_pairs) if ds is not None else None
        tr_s = student.select_sessions(train_pairs) if student is not None else None
        teacher = run.load_model(k, "teacher") if needs_teacher else None
        trained = {}
        for name in names:
            if name == "teacher":
                trained.update(experiment.train_fold(cfg, k, tr_t, only=["teacher"]))
            elif name.startswith("baseline"):
                trained.update(experiment.train_fold(cfg, k, tr_s, only=[name]))
            else:
                v = int(name[len("distilled"):])
                kd = replace(cfg.kd, seed=experiment.model_seed(cfg, k, name))
                trained[name] = train_distilled_student(teacher, tr_t, tr_s, v, kd)
        experiment.save_fold_models(trained, run.models / f"fold{k}", run.tags)
        for name, (_, h) in trained.items():
            print(f"fold {k} {name}: best epoch {h.best_epoch}, final loss {h.train_loss[-1]:.4f}")


def _variants(run: Run, args) -> list[int]:
    return [args.variant] if args.variant else list(run.cfg.variants)


def cmd_train_teacher(run: Run, args) -> None:
    _train(run, args, ["teacher"])


def cmd_train_student(run: Run, args) -> None:
    _train(run, args, [f"baseline{v}" for v in _variants(run, args)])


def cmd_distill(run: Run, args) -> None:
    _train(run, args, [f"distilled{v}" for v in _variants(run, args)], needs_teacher=True)


def _model_names(cfg: ExperimentConfig) -> list[str]:
    return [n for n in MODEL_ORDER if n == "teacher" or int(n[-1]) in cfg.variants]


def cmd_evaluate(run: Run, args) -> None:
    ds = run.load(TEACHER)
    plan = run.plan(ds)
    run.eval.mkdir(parents=True, exist_ok=True)
    for k in run.folds(args, plan):
        test = ds.select_sessions(plan.folds[k][1])
        models = {name: run.load_model(k, name) for name in _model_names(run.cfg)}
        metrics = {n: evaluate_predictions(test, experiment.predict_proba(g, test)) for n, g in models.items()}
        out = run.eval / f"fold{k}.json"
        out.write_text(json.dumps({**run.tags, "fold": k, "metrics": metrics}, indent=1, sort_keys=True) + "\n")
        print(f"fold {k}: " + "  ".join(f"{n} {100 * m['f1_2s']:.2f}/{100 * m['f1_10s']:.2f}" for n, m in metrics.items()))


def cmd_report(run: Run, args) -> None:
    ds = run.load(TEACHER)
    plan = run.plan(ds)
    fold_metrics, histories = [], {}
    for k in range(len(plan.folds)):
        path = _require(run.eval / f"fold{k}.json", f"evaluation for fold {k} (run `evaluate` first)")
        rec = json.loads(path.read_text())
        if rec.get("config_hash") != run.cfg.config_hash():
            raise DependencyError(f"{path} belongs to config {rec.get('config_hash')}")
        fold_metrics.append(rec["metrics"])
        histories[f"fold{k}"] = {}
        for name in rec["metrics"]:
            hp = run.models / f"fold{k}" / f"{name}.json"
            if hp.is_file():
                histories[f"fold{k}"][name] = json.loads(hp.read_text())["history"]
    report = experiment.build_report(run.cfg, plan, fold_metrics, histories)
    path = write_report(report, run.report)
    print(report_table(report))
    print(f"report written to {path}")


def cmd_run_all(run: Run, args) -> None:
    args.fold = None
    args.variant = None
    args.mode = None
    args.sessions = None
    for step in (cmd_simulate, cmd_preprocess, cmd_train_teacher, cmd_train_student, cmd_distill,
                 cmd_evaluate, cmd_report):
        log.info("running %s", step.__name__[4:].replace("_", "-"))
        step(run, args)


def cmd_summary(run: Run, args) -> None:
    print(audit_text())
    for name in ["teacher"] + [f"student{v}" for v in run.cfg.variants]:
        print()
        print(build_model(name).summary())


COMMANDS = {
    "simulate": (cmd_simulate, "generate session recordings"),
    "preprocess": (cmd_preprocess, "window the recordings into teacher and student datasets"),
    "train-teacher": (cmd_train_teacher, "train the multimodal teacher per fold"),
    "train-student": (cmd_train_student, "train baseline students per fold"),
    "distill": (cmd_distill, "distill students from the fold teachers"),
    "evaluate": (cmd_evaluate, "score all models on each fold's test sessions"),
    "report": (cmd_report, "aggregate fold metrics into the experiment report"),
    "run-all": (cmd_run_all, "every stage in order"),
    "summary": (cmd_summary, "print the parameter audit and model summaries"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blekd", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="experiment TOML file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (env BLEKD_OUT)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--jobs", type=int, help="worker processes (env BLEKD_JOBS)")
        if name in ("train-student", "distill"):
            p.add_argument("--variant", type=int, choices=(1, 2, 3))
        if name in ("train-teacher", "train-student", "distill", "evaluate"):
            p.add_argument("--fold", type=int, help="only this fold")
        if name == "preprocess":
            p.add_argument("--mode", choices=MODES, help="only this mode (default both)")
            p.add_argument("--sessions", help="session directory (default <out>/sessions)")
    return ap


def resolve_config(args, env=None) -> ExperimentConfig:
    cfg = load_config(args.config, env)
    if args.out:
        cfg.out_dir = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(resolve_config(args))
        fold = getattr(args, "fold", None)
        if fold is not None and not 0 <= fold < run.cfg.cohort.sessions:
            raise ConfigError(f"--fold must lie in [0, {run.cfg.cohort.sessions - 1}]")
        COMMANDS[args.command][0](run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except Exception as exc:  # noqa: BLE001 - every other failure maps to one exit code
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
