import numpy as np
import pytest

from blekd.autodiff import ModelGraph, softmax
from blekd.models import (
    STUDENT_TARGETS,
    PUBLISHED_TEACHER_COUNTS,
    audit_text,
    build_model,
    build_student,
    build_teacher,
    causality_branch,
    cross_channel_branch,
    param_audit,
    to_model_input,
)


def test_teacher_output_is_distribution():
    g = build_teacher(seed=1)
    x = to_model_input(g, np.random.default_rng(0).normal(size=(1, 6, 100)))
    p = softmax(g.forward(x)[0])
    assert p.shape == (1, 4) and p.sum() == pytest.approx(1.0)


def test_teacher_branch_additivity():
    full = build_teacher().param_count
    no_lstm = build_teacher(with_lstm=False).param_count
    b = ModelGraph("b", (100, 6), [causality_branch()])
    a = ModelGraph("a", (100, 6), [cross_channel_branch()])
    # the head's first dense layer also loses the 10 inputs the branch fed it
    assert full - no_lstm == b.param_count + 10 * 10
    # head: dense(20 -> 10) + dense(10 -> 4) with the LSTM branch, dense(10 -> 10) + dense(10 -> 4) without
    assert full == a.param_count + b.param_count + 20 * 10 + 10 + 10 * 4 + 4


def test_teacher_layer_counts():
    a = ModelGraph("a", (100, 6), [cross_channel_branch()])
    b = ModelGraph("b", (100, 6), [causality_branch()])
    # dense 6->10, conv 10->40 k10, conv 40->40 k10, dense 40->10
    assert a.param_count == 70 + (10 * 10 * 40 + 40) + (10 * 40 * 40 + 40) + 410
    # lstm 16 on 6 inputs, then dense 1600 -> 10
    assert b.param_count == 4 * 16 * (6 + 16 + 1) + 1600 * 10 + 10


@pytest.mark.parametrize("v", [1, 2, 3])
def test_student_counts_exact(v):
    assert build_student(v).param_count == STUDENT_TARGETS[v]


def test_student_outputs_and_order():
    counts = []
    for v in (1, 2, 3):
        g = build_student(v)
        x = to_model_input(g, np.random.default_rng(v).normal(size=(2, 3, 100)))
        p = softmax(g.forward(x)[0])
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        counts.append(g.param_count)
    assert counts[0] < counts[1] < counts[2]


def test_invalid_variant():
    with pytest.raises(ValueError):
        build_student(4)
    with pytest.raises(ValueError):
        build_model("nope")


def test_audit_reports_both_teacher_figures():
    a = param_audit()
    assert a["teacher"]["published"] == list(PUBLISHED_TEACHER_COUNTS)
    assert a["teacher"]["total"] == build_teacher().param_count
    assert all(s["difference"] == 0 for s in a["students"].values())
    text = audit_text(a)
    assert "4594" in text and "20416" in text


def test_square_kernel_alternative_is_larger():
    for v in (1, 2, 3):
        assert build_student(v, kernel_layout="square").param_count > STUDENT_TARGETS[v]


def test_graph_hash_distinguishes_variants():
    assert build_student(1).graph_hash() != build_student(2).graph_hash()
    assert build_student(1, seed=0).graph_hash() == build_student(1, seed=5).graph_hash()
