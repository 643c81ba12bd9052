import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blekd.signal import (
    STUDENT,
    TEACHER,
    PreprocessConfig,
    SignalError,
    UniformStream,
    WindowDataset,
    butter_sos,
    butterworth_lowpass,
    load_dataset,
    preprocess_session,
    remove_dc_offset,
    resample_uniform,
    save_dataset,
    slide_windows,
)
from blekd.sim import RadioParams, UltrasoundParams, build_factory_map, generate_session
from blekd.sim.walk import WalkParams
from filter_oracle import PROBES_HZ, analytic_gain, measured_gain, xcorr_peak_lag

FMAP = build_factory_map()


def _session(seed=0, duration=90, plan=(1, 2, 3, 4), walk=None):
    return generate_session(seed, FMAP, list(plan), duration, RadioParams(slow_fade_sigma_db=6),
                            UltrasoundParams(), participant_id=1, session_id=seed % 5, walk=walk)


# -- DC removal -------------------------------------------------------------------

@pytest.mark.parametrize("x,want", [
    ([-60, -60, -60], [0, 0, 0]),
    ([-60, -70, -80], [10, 0, -10]),
    ([-1, 1, -1, 1], [-1, 1, -1, 1]),
])
def test_dc_examples(x, want):
    np.testing.assert_allclose(remove_dc_offset(np.array(x, float)), want, atol=1e-12)


def test_dc_stream_and_empty():
    s = remove_dc_offset(UniformStream(50, 0, np.array([[1.0, 2, 3], [5, 5, 8]])))
    np.testing.assert_allclose(s.values.mean(axis=1), 0, atol=1e-12)
    with pytest.raises(SignalError):
        remove_dc_offset(np.array([]))


# -- resampling -------------------------------------------------------------------

def test_resample_identity():
    t = np.arange(101) / 50
    v = np.sin(t)
    out = resample_uniform(t, v, 50, (0, 2))
    np.testing.assert_allclose(out.values[0], v, atol=1e-12)


def test_resample_ramp_exact():
    t = np.arange(21) / 10
    out = resample_uniform(t, t, 50, (0, 2))
    np.testing.assert_allclose(out.values[0], out.times, atol=1e-12)


def test_resample_length_and_errors():
    assert resample_uniform([0, 1], [3, 4], 50, (0, 1)).n_samples == 51
    with pytest.raises(SignalError):
        resample_uniform([0.0], [1.0], 50, (0, 0))
    with pytest.raises(SignalError):
        resample_uniform([0, 1], [3, 4], 50, (0, 5))


# -- Butterworth --------------------------------------------------------------------

@pytest.mark.parametrize("f", PROBES_HZ)
def test_butterworth_matches_analytic_response(f):
    amp, _ = measured_gain(f)
    assert amp == pytest.approx(analytic_gain(f, 3.0, 50.0, 4), rel=0.10)


def test_butterworth_dc_gain():
    y = butterworth_lowpass(UniformStream(50, 0, np.full(500, -63.0)), 3.0).values[0]
    np.testing.assert_allclose(y, -63.0, rtol=1e-6)


def test_butterworth_zero_phase():
    assert xcorr_peak_lag() == 0
    for f in (1.0, 3.0):
        _, quad = measured_gain(f)
        assert abs(quad) < 1e-6


def test_butterworth_stable_impulse():
    x = np.zeros(1000)
    x[500] = 1.0
    y = butterworth_lowpass(UniformStream(50, 0, x), 3.0).values[0]
    assert np.isfinite(y).all() and np.sum(y ** 2) < 1.0
    assert np.abs(y[:100]).max() < 1e-8 and np.abs(y[-100:]).max() < 1e-8


def test_cutoff_above_nyquist():
    with pytest.raises(SignalError):
        butter_sos(25.0, 50.0)
    assert butter_sos(3.0, 50.0, 4).shape == (2, 6)


# -- windowing ----------------------------------------------------------------------

@pytest.mark.parametrize("n,k", [(100, 1), (200, 5), (1000, 37)])
def test_window_count(n, k):
    ds = slide_windows(UniformStream(50, 0, np.zeros((3, n))), np.ones(n, int))
    assert len(ds) == k == (n - 100) // 25 + 1
    np.testing.assert_allclose(ds.start_t, np.arange(k) * 0.5)


def test_short_stream_warns():
    with pytest.warns(UserWarning):
        ds = slide_windows(UniformStream(50, 0, np.zeros((3, 99))), np.ones(99, int))
    assert len(ds) == 0 and ds.warning


def test_window_label_majority_and_tie():
    labels = np.r_[np.full(40, 3), np.full(60, 2)]
    assert slide_windows(UniformStream(50, 0, np.zeros((1, 100))), labels).labels[0] == 2
    labels = np.r_[np.full(50, 4), np.full(50, 2)]
    assert slide_windows(UniformStream(50, 0, np.zeros((1, 100))), labels).labels[0] == 2


def test_window_contents():
    v = np.arange(300, dtype=float)[None, :]
    ds = slide_windows(UniformStream(50, 0, v), np.ones(300, int))
    np.testing.assert_array_equal(ds.windows[3, 0], np.arange(75, 175))


# -- full preprocessing ----------------------------------------------------------------

def test_modes_and_shapes():
    rec = _session()
    t = preprocess_session(rec, TEACHER)
    s = preprocess_session(rec, STUDENT)
    assert t.windows.shape[1:] == (6, 100) and s.windows.shape[1:] == (3, 100)
    assert len(t) == len(s) > 0
    assert t.windows.dtype == np.float32


def test_preprocessing_deterministic():
    rec = _session(seed=3)
    a, b = preprocess_session(rec), preprocess_session(rec)
    np.testing.assert_array_equal(a.windows, b.windows)
    np.testing.assert_array_equal(a.labels, b.labels)


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from([(1, 2, 3, 4), (4, 2), (3, 1, 2, 4)]))
def test_teacher_student_alignment(seed, plan):
    rec = _session(seed=seed, duration=60, plan=plan)
    t = preprocess_session(rec, TEACHER)
    s = preprocess_session(rec, STUDENT)
    assert len(t) == len(s)
    np.testing.assert_array_equal(t.labels, s.labels)
    np.testing.assert_array_equal(t.start_t, s.start_t)
    assert t.windows[:, :3].tobytes() == s.windows.tobytes()


def test_window_labels_appear_in_raw_timeline():
    rec = _session(seed=5, duration=200)
    ds = preprocess_session(rec)
    for st_, lab in zip(ds.start_t[::7], ds.labels[::7]):
        m = (rec.label_t >= st_) & (rec.label_t < st_ + 2.0)
        assert lab in set(rec.label_c[m]) | {int(rec.label_at(st_))}


def test_constant_position_single_label():
    still = WalkParams(dwell_range=(500.0, 500.0), work_speed=1e-6, pause_range=(500.0, 500.0), gait_bob_m=0.0)
    rec = _session(seed=2, duration=60, plan=(3,), walk=still)
    assert len(set(preprocess_session(rec).labels)) == 1


def test_rssi_channels_zero_mean_before_filtering():
    rec = _session(seed=4, duration=120)
    for t, v in rec.rssi:
        assert abs(remove_dc_offset(v).mean()) < 1e-9


# -- container -------------------------------------------------------------------------

def test_dataset_roundtrip(tmp_path):
    ds = preprocess_session(_session(seed=6))
    ds.config_hash = "abc"
    path = save_dataset(ds, tmp_path / "d.bswd", {"master_seed": 6})
    back = load_dataset(path)
    np.testing.assert_array_equal(back.windows, ds.windows)
    for f in ("labels", "participant", "session", "start_t"):
        np.testing.assert_array_equal(getattr(back, f), getattr(ds, f))
    assert back.mode == TEACHER and back.config_hash == "abc"
    assert path.read_bytes()[:4] == b"BSWD"


def test_dataset_rejects_garbage(tmp_path):
    (tmp_path / "x.bswd").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(SignalError):
        load_dataset(tmp_path / "x.bswd")


def test_concat_and_select():
    a = preprocess_session(_session(seed=1, duration=40))
    b = preprocess_session(_session(seed=2, duration=40))
    both = WindowDataset.concat([a, b])
    assert len(both) == len(a) + len(b)
    assert len(both.select_sessions([(1, 1)])) == len(a)
    assert sum(both.class_counts().values()) == len(both)
