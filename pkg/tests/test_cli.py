import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from blekd.cli import EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_OK, EXIT_RUNTIME, main
from blekd.config import ConfigError, ExperimentConfig, load_config
from blekd.evaluate import MODEL_ORDER
from blekd.experiment import FoldError, run_experiment

ROOT = Path(__file__).resolve().parents[1]
TINY = ROOT / "configs" / "tiny.toml"


def _digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


# -- configuration --------------------------------------------------------------------

def test_defaults_without_file():
    cfg = load_config(None, env={})
    assert cfg.cohort.n_full == 10 and cfg.cohort.n_short == 2 and cfg.cohort.duration_s == 1200
    assert cfg.kd.alpha == 0.1 and cfg.kd.temperature == 10 and cfg.baseline.optimizer == "adadelta"


def test_unknown_key_reports_line(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 1\n\n[kd]\nalpha = 0.2\ntemprature = 4\n")
    with pytest.raises(ConfigError) as e:
        load_config(p, env={})
    assert e.value.line == 5 and "temprature" in str(e.value)


def test_bad_value_and_syntax(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[kd]\nalpha = 3.0\n")
    with pytest.raises(ConfigError):
        load_config(p, env={})
    p.write_text("[cohort]\nn_full = 'ten'\n")
    with pytest.raises(ConfigError) as e:
        load_config(p, env={})
    assert e.value.line == 2
    p.write_text("[cohort\n")
    with pytest.raises(ConfigError) as e:
        load_config(p, env={})
    assert e.value.line == 1


def test_env_overrides_and_hash():
    cfg = load_config(TINY, env={"BLEKD_OUT": "/x/y", "BLEKD_JOBS": "3"})
    assert cfg.out_dir == "/x/y" and cfg.jobs == 3
    assert cfg.config_hash() == load_config(TINY, env={}).config_hash()
    other = load_config(TINY, env={})
    other.seed += 1
    assert other.config_hash() != cfg.config_hash()


def test_nested_sections(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[scenario.radio]\nshadow_sigma_db = 2\n[scenario.map]\nwidth_m = 13.0\n"
                 "[scenario]\nplan = [4, 3, 2, 1]\n")
    cfg = load_config(p, env={})
    assert cfg.scenario.radio.shadow_sigma_db == 2.0 and cfg.scenario.map.width_m == 13.0
    assert cfg.scenario.plan == [4, 3, 2, 1]


# -- commands ------------------------------------------------------------------------------

def _tiny(tmp_path, body=""):
    p = tmp_path / "c.toml"
    p.write_text(TINY.read_text() + body)
    return str(p)


def test_simulate_count_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 3\n[cohort]\nn_full = 12\nn_short = 0\nduration_s = 20.0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert "60 sessions" in capsys.readouterr().out
    dirs = [d for d in (tmp_path / "a" / "sessions").iterdir() if d.is_dir()]
    assert len(dirs) == 60
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_malformed_config_writes_nothing(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[cohort]\nn_full = 2\nbogus = 1\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_preprocess_requires_sessions(tmp_path):
    assert main(["preprocess", "--out", str(tmp_path)]) == EXIT_DEPENDENCY


def test_evaluate_requires_teacher_checkpoint(tmp_path, capsys):
    cfg = _tiny(tmp_path)
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", cfg, "--out", out]) == EXIT_OK
    assert main(["preprocess", "--config", cfg, "--out", out]) == EXIT_OK
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg, "--out", out]) == EXIT_DEPENDENCY
    err = capsys.readouterr().err
    assert "teacher.bspc" in err and str(Path(out) / "models" / "fold0") in err


def test_preprocess_summary_and_alignment(tmp_path, capsys):
    cfg = _tiny(tmp_path)
    out = tmp_path / "o"
    main(["simulate", "--config", cfg, "--out", str(out)])
    capsys.readouterr()
    assert main(["preprocess", "--config", cfg, "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    counts = [int(x.split(":")[1]) for x in text.split("windows per class: ")[1].splitlines()[0].split()]
    meta_t = json.loads((out / "datasets" / "teacher.bswd.meta.json").read_text())
    meta_s = json.loads((out / "datasets" / "student.bswd.meta.json").read_text())
    assert sum(counts) == meta_t["num_windows"] == meta_s["num_windows"]
    assert meta_t["master_seed"] == 7 and meta_t["config_hash"] == meta_s["config_hash"]


def test_runtime_failure_exit_code(tmp_path):
    cfg = _tiny(tmp_path, "\n[preprocess]\nrssi_cutoff_hz = 30.0\n")
    out = str(tmp_path / "o")
    main(["simulate", "--config", cfg, "--out", out])
    assert main(["preprocess", "--config", cfg, "--out", out]) == EXIT_RUNTIME


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["run-all", "--config", str(TINY), "--out", str(out)])
    return code, out


def test_run_all_complete_report(tiny_run):
    code, out = tiny_run
    assert code == EXIT_OK
    report = json.loads((out / "report" / "report.json").read_text())
    assert set(report["models"]) == set(MODEL_ORDER)
    for m in report["models"].values():
        assert len(m["folds"]) == 5
        assert all("f1_2s" in f and "f1_10s" in f for f in m["folds"])
        assert m["mean_f1_2s"] == pytest.approx(np.mean([f["f1_2s"] for f in m["folds"]]), abs=1e-9)
    assert report["param_counts"]["student3"] == 4594
    text = (out / "report" / "report.txt").read_text()
    assert "79.85" in text and "70.96" in text and "76.04" in text


def test_artifacts_share_hash_and_seed(tiny_run):
    _, out = tiny_run
    cfg = load_config(TINY, env={})
    h = cfg.config_hash()
    tagged = [out / "sessions" / "manifest.json", out / "datasets" / "teacher.bswd.meta.json",
              out / "models" / "fold2" / "distilled1.json", out / "eval" / "fold4.json", out / "report" / "report.json"]
    for p in tagged:
        d = json.loads(p.read_text())
        assert d["config_hash"] == h and d["master_seed"] == cfg.seed, p
    assert json.loads((out / "sessions" / "p00_s0" / "meta.json").read_text())["config_hash"] == h


def test_partial_rerun_single_fold(tiny_run, capsys):
    _, out = tiny_run
    before = (out / "eval" / "fold1.json").read_bytes()
    assert main(["evaluate", "--config", str(TINY), "--out", str(out), "--fold", "1"]) == EXIT_OK
    assert (out / "eval" / "fold1.json").read_bytes() == before


def test_summary_command(capsys):
    assert main(["summary"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "20416" in text and "total parameters: 4594" in text


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "blekd.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("simulate", "preprocess", "train-teacher", "train-student", "distill", "evaluate", "report", "run-all"):
        assert cmd in r.stdout


# -- in-memory experiment -------------------------------------------------------------------

def test_run_experiment_structure_and_fold_errors():
    cfg = load_config(TINY, env={})
    rep = run_experiment(cfg)
    assert len(rep["models"]) == 7 and all(len(m["folds"]) == 5 for m in rep["models"].values())
    assert set(rep["seeds"]["fold0"]) == set(MODEL_ORDER)
    cfg.teacher.batch_size = 10_000
    with pytest.raises(FoldError) as e:
        run_experiment(cfg)
    assert e.value.fold == 0
