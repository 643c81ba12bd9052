import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blekd.evaluate import (
    PUBLISHED_F1,
    PlanError,
    aggregate_10s,
    cm_to_csv,
    cm_to_pgm,
    confusion_matrix,
    evaluate_predictions,
    make_folds,
    macro_f1,
    report_table,
    summarize,
    write_report,
)
from toydata import toy_dataset


def cohort(n_full=10, short=(3, 4)):
    pairs = [(p, s) for p in range(n_full) for s in range(5)]
    for j, n in enumerate(short):
        pairs += [(n_full + j, s) for s in range(n)]
    return pairs


# -- folds ---------------------------------------------------------------------------

def test_reference_fold_structure():
    plan = make_folds(cohort())
    assert len(plan.folds) == 5
    tests = [set(te) for _, te in plan.folds]
    assert all(len(t) == 10 for t in tests)
    for k, (tr, te) in enumerate(plan.folds):
        assert set(te) == {(p, k) for p in range(10)}
        assert not set(tr) & set(te)
        assert {(10, s) for s in range(3)} | {(11, s) for s in range(4)} <= set(tr)
        assert len(tr) == 40 + 7
    assert set().union(*tests) == set(cohort(short=()))


def test_single_participant():
    plan = make_folds(cohort(1, ()))
    assert [(len(tr), len(te)) for tr, te in plan.folds] == [(4, 1)] * 5


def test_short_participant_train_only():
    plan = make_folds(cohort(2, (3,)))
    assert plan.always_train == [(2, 0), (2, 1), (2, 2)]
    for tr, te in plan.folds:
        assert all(p != 2 for p, _ in te)
        assert {(2, 0), (2, 1), (2, 2)} <= set(tr)


def test_too_many_sessions():
    with pytest.raises(PlanError):
        make_folds([(0, s) for s in range(6)])


# -- metrics ------------------------------------------------------------------------

def test_confusion_examples():
    truth = np.repeat([1, 2, 3, 4], 5)
    np.testing.assert_array_equal(confusion_matrix(truth, truth), np.eye(4) * 5)
    cm = confusion_matrix(np.ones(20, int), truth)
    np.testing.assert_array_equal(cm[:, 0], 5)
    assert cm[:, 1:].sum() == 0
    assert not confusion_matrix([], []).any()
    with pytest.raises(ValueError):
        confusion_matrix([0], [1])
    with pytest.raises(ValueError):
        confusion_matrix([1, 2], [1])


def test_macro_f1_examples():
    assert macro_f1(np.eye(4) * 3) == 1.0
    cm = confusion_matrix(np.ones(20, int), np.repeat([1, 2, 3, 4], 5))
    assert macro_f1(cm) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        macro_f1(np.zeros((4, 4)))


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=200))
def test_confusion_total_and_f1_range(pairs):
    p, t = map(np.array, zip(*pairs))
    cm = confusion_matrix(p, t)
    assert cm.sum() == len(pairs) and (cm >= 0).all()
    assert 0.0 <= macro_f1(cm) <= 1.0


# -- 10 s aggregation -------------------------------------------------------------------

def _probs(classes, conf=0.7):
    out = np.full((len(classes), 4), (1 - conf) / 3)
    out[np.arange(len(classes)), np.asarray(classes) - 1] = conf
    return out


def test_aggregate_uniform_prediction():
    starts = np.arange(0, 60, 0.5)
    _, cls, n_empty = aggregate_10s(starts, _probs(np.full(len(starts), 2)))
    assert set(cls) == {2} and n_empty == 0 and len(cls) == 7


def test_aggregate_majority():
    starts = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    _, cls, _ = aggregate_10s(starts, _probs([1, 3, 1, 3, 1]))
    assert list(cls) == [1]


def test_aggregate_tie_by_confidence():
    starts = np.array([0.0, 1.0, 2.0, 3.0])
    probs = np.array([
        [0.6, 0.0, 0.4, 0.0],
        [0.6, 0.0, 0.4, 0.0],
        [0.4, 0.0, 0.6, 0.0],
        [0.2, 0.0, 0.8, 0.0],
    ])
    # two votes each; mean probability 0.45 for class 1 vs 0.55 for class 3
    _, cls, _ = aggregate_10s(starts, probs)
    assert list(cls) == [3]


def test_aggregate_empty_segment_warns():
    starts = np.r_[np.arange(0, 8, 0.5), np.arange(30, 38, 0.5)]
    with pytest.warns(UserWarning):
        ids, cls, n_empty = aggregate_10s(starts, _probs(np.ones(len(starts), int)))
    assert n_empty == 2 and list(ids) == [0, 3]


@given(st.lists(st.integers(1, 4), min_size=1, max_size=12), st.integers(1, 30))
def test_aggregate_agrees_with_unanimous_windows(classes, reps):
    labels = np.repeat(classes, reps)
    starts = np.arange(len(labels)) * 0.5
    probs = _probs(labels, conf=0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ids, cls, _ = aggregate_10s(starts, probs)
    seg = np.floor((starts + 1.0 - starts[0]) / 10.0 + 1e-9).astype(int)
    for i, c in zip(ids, cls):
        inside = labels[seg == i]
        if len(set(inside)) == 1:
            assert c == inside[0]


def test_aggregate_requires_sorted():
    with pytest.raises(ValueError):
        aggregate_10s(np.array([1.0, 0.0]), _probs([1, 1]))


# -- evaluation and reports ---------------------------------------------------------------

def test_evaluate_predictions_totals():
    ds = toy_dataset(120, sessions=3)
    probs = _probs(ds.labels)
    r = evaluate_predictions(ds, probs)
    assert r["f1_2s"] == 1.0
    cm10 = np.array(r["cm_10s"])
    assert (cm10 == np.diag(np.diag(cm10))).all()
    assert np.sum(r["cm_2s"]) == r["n_windows"] == len(ds)
    assert np.sum(r["cm_10s"]) == r["n_segments"]


def _fake_report():
    rng = np.random.default_rng(0)
    folds = {}
    for name in PUBLISHED_F1:
        folds[name] = []
        for _ in range(5):
            cm = rng.integers(0, 30, size=(4, 4)).tolist()
            folds[name].append({"f1_2s": macro_f1(cm), "f1_10s": macro_f1(cm), "cm_2s": cm, "cm_10s": cm,
                                "n_windows": int(np.sum(cm)), "n_segments": int(np.sum(cm))})
    return {"config_hash": "h", "master_seed": 1, "models": summarize(folds)}


def test_summary_mean_is_mean_of_folds():
    rep = _fake_report()
    for m in rep["models"].values():
        assert m["mean_f1_2s"] == pytest.approx(np.mean([f["f1_2s"] for f in m["folds"]]), abs=1e-9)


def test_report_table_has_published_rows():
    text = report_table(_fake_report())
    assert "not comparable" in text
    teacher = next(l for l in text.splitlines() if l.startswith("teacher"))
    d3 = next(l for l in text.splitlines() if l.startswith("distilled3"))
    assert "79.85" in teacher and "84.41" in teacher
    assert "70.96" in d3 and "76.04" in d3


def test_write_report_files(tmp_path):
    path = write_report(_fake_report(), tmp_path)
    data = json.loads(path.read_text())
    assert set(data["models"]) == set(PUBLISHED_F1)
    assert (tmp_path / "cm_teacher_2s.csv").read_text().startswith("true\\pred,1,2,3,4")
    pgm = (tmp_path / "cm_teacher_10s.pgm").read_bytes()
    assert pgm.startswith(b"P5\n64 64\n255\n") and len(pgm) == len(b"P5\n64 64\n255\n") + 64 * 64


def test_cm_helpers():
    assert cm_to_csv([[1, 0, 0, 0]] * 4).count("\n") == 5
    assert cm_to_pgm(np.zeros((4, 4)), cell=1).endswith(bytes([255]) * 16)
