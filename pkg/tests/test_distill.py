import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from blekd.autodiff import kld, softmax
from blekd.distill import (
    AlignmentError,
    KdConfig,
    TrainConfig,
    TrainingError,
    accuracy,
    baseline_config,
    distillation_loss,
    distillation_loss_grad,
    split_validation,
    teacher_config,
    tempered_softmax,
    total_kd_loss,
    train_baseline_student,
    train_distilled_student,
    train_logit_student,
    train_teacher,
)
from blekd.models import to_model_input
from toydata import toy_dataset

logits = arrays(np.float64, (6, 4), elements=st.floats(-10, 10, allow_nan=False))


# -- losses -----------------------------------------------------------------------

def test_tempered_softmax_examples():
    np.testing.assert_allclose(tempered_softmax(np.ones((1, 4)), 3.7), 0.25)
    np.testing.assert_allclose(tempered_softmax(np.array([[2.0, 0.0]]), 1), [[0.8808, 0.1192]], atol=1e-4)
    z = np.random.default_rng(0).uniform(-5, 5, size=(10, 4))
    p = tempered_softmax(z, 1000)
    assert (p.max(axis=1) - p.min(axis=1)).max() < 0.01
    with pytest.raises(ValueError):
        tempered_softmax(z, 0)


def test_distillation_loss_reference_value():
    # closed form: KL(softmax([1,0,0,0]) || uniform)
    e = math.e
    p = [e / (e + 3)] + [1 / (e + 3)] * 3
    want = sum(pi * math.log(pi / 0.25) for pi in p)
    got = distillation_loss(np.array([[1.0, 0, 0, 0]]), np.zeros((1, 4)), 1.0)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.1181, abs=2e-4)


@given(logits, st.sampled_from([1.0, 5.0, 10.0]))
def test_identical_logits_zero_loss(z, T):
    assert abs(distillation_loss(z, z, T)) < 1e-12


@given(logits, logits)
def test_temperature_squared_scaling(t, s):
    tempered = kld(softmax(t / 10), softmax(s / 10))
    assert distillation_loss(t, s, 10.0) == pytest.approx(100 * tempered, rel=1e-12, abs=1e-300)


def test_total_kd_loss_cases():
    assert total_kd_loss(1.3, 2.9, 1.0) == 1.3
    assert total_kd_loss(1.3, 2.9, 0.0) == 2.9
    assert total_kd_loss(1.0, 2.0, 0.1) == pytest.approx(1.9)


@given(logits, logits, st.floats(0.5, 20))
def test_distillation_gradient_finite_difference(t, s, T):
    g = distillation_loss_grad(t, s, T)
    eps = 1e-6
    for i, j in [(0, 0), (2, 3), (5, 1)]:
        sp, sm = s.copy(), s.copy()
        sp[i, j] += eps
        sm[i, j] -= eps
        fd = (distillation_loss(t, sp, T) - distillation_loss(t, sm, T)) / (2 * eps)
        assert g[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        distillation_loss(np.zeros((2, 4)), np.zeros((2, 3)), 1.0)


# -- configs -----------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        KdConfig(alpha=1.5)
    with pytest.raises(ValueError):
        KdConfig(temperature=0)
    assert baseline_config().optimizer == "adadelta" and baseline_config().lr == 0.9
    assert teacher_config().optimizer == "adam"


def test_validation_split_per_session():
    ds = toy_dataset(200, sessions=4)
    tr, va = split_validation(ds, 0.1, seed=1)
    assert len(np.intersect1d(tr, va)) == 0 and len(tr) + len(va) == 200
    for s in range(4):
        assert np.sum(ds.session[va] == s) == 5


# -- training -------------------------------------------------------------------------

def test_teacher_learns_separable_data():
    ds = toy_dataset(320, seed=1)
    g, h = train_teacher(ds, teacher_config(epochs=100, seed=3, early_stop_patience=20))
    x = to_model_input(g, ds.windows)
    assert accuracy(g, x, ds.labels - 1) > 0.95
    assert h.val_accuracy[h.best_epoch] == max(h.val_accuracy)


def test_teacher_deterministic():
    ds = toy_dataset(160, seed=2)
    cfg = teacher_config(epochs=2, seed=9)
    a, _ = train_teacher(ds, cfg)
    b, _ = train_teacher(ds, cfg)
    for p, q in zip(a.store, b.store):
        np.testing.assert_array_equal(p.value, q.value)


def test_baseline_learns_and_is_bounded():
    ds = toy_dataset(320, seed=4)
    g, h = train_baseline_student(ds, 2, baseline_config(epochs=100, seed=1, early_stop_patience=10))
    x = to_model_input(g, ds.student_view().windows)
    assert accuracy(g, x, ds.labels - 1) > 0.90
    assert len(h.train_loss) <= 100
    g2, _ = train_baseline_student(ds, 2, baseline_config(epochs=100, seed=1, early_stop_patience=10))
    for p, q in zip(g.store, g2.store):
        np.testing.assert_array_equal(p.value, q.value)


def test_early_stopping_on_plateau():
    ds = toy_dataset(256, seed=5)
    ds.labels[:] = 2
    _, h = train_baseline_student(ds, 1, baseline_config(epochs=60, seed=0, early_stop_patience=3))
    assert h.stopped_early and len(h.train_loss) < 60
    assert h.restored and h.best_epoch == int(np.argmax(h.val_accuracy))


def test_too_small_for_a_batch():
    with pytest.raises(TrainingError):
        train_teacher(toy_dataset(40), teacher_config(epochs=1))


def test_alpha_one_matches_plain_logit_training():
    ds = toy_dataset(192, seed=6)
    teacher, _ = train_teacher(ds, teacher_config(epochs=1, seed=1))
    kd = KdConfig(alpha=1.0, epochs=3, seed=11)
    a, _ = train_distilled_student(teacher, ds, ds.student_view(), 1, kd)
    b, _ = train_logit_student(ds, 1, kd)
    for p, q in zip(a.store, b.store):
        np.testing.assert_array_equal(p.value, q.value)


def test_teacher_frozen_during_distillation():
    ds = toy_dataset(192, seed=7)
    teacher, _ = train_teacher(ds, teacher_config(epochs=1, seed=2))
    before = teacher.store.snapshot()
    train_distilled_student(teacher, ds, ds.student_view(), 2, KdConfig(epochs=2, seed=3))
    for name, v in teacher.store.snapshot().items():
        np.testing.assert_array_equal(v, before[name])


def test_misaligned_datasets():
    ds = toy_dataset(192, seed=8)
    teacher, _ = train_teacher(ds, teacher_config(epochs=1))
    other = ds.subset(np.arange(len(ds)) < 150).student_view()
    with pytest.raises(AlignmentError):
        train_distilled_student(teacher, ds, other, 1, KdConfig(epochs=1))
    shifted = ds.student_view()
    shifted.labels = np.roll(shifted.labels, 1)
    with pytest.raises(AlignmentError):
        train_distilled_student(teacher, ds, shifted, 1, KdConfig(epochs=1))


def test_history_csv():
    ds = toy_dataset(160, seed=9)
    _, h = train_baseline_student(ds, 1, baseline_config(epochs=3, seed=0))
    lines = h.to_csv().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_accuracy" and len(lines) == 1 + len(h.train_loss)
