"""Preprocessing chain: raw multirate session streams to fixed-shape windows.

RSSI: per-session DC offset removal, linear resampling to 50 Hz, 3 Hz
zero-phase Butterworth low-pass. Ultrasound: resampling to 50 Hz, 10 Hz
low-pass. Both are cut on one shared grid, so teacher (6 channel) and
student (3 channel) windows align one to one.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .sim.session import SessionRecording

TEACHER, STUDENT = "teacher", "student"
MODES = (TEACHER, STUDENT)
CHANNELS = {TEACHER: ("rx1", "rx2", "rx3", "x", "y", "z"), STUDENT: ("rx1", "rx2", "rx3")}


class SignalError(ValueError):
    pass


@dataclass
class UniformStream:
    rate_hz: float
    start_t: float
    values: np.ndarray  # (channels, samples)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.start_t + np.arange(self.n_samples) / self.rate_hz


@dataclass
class PreprocessConfig:
    rate_hz: float = 50.0
    rssi_cutoff_hz: float = 3.0
    us_cutoff_hz: float = 10.0
    filter_order: int = 4
    win_s: float = 2.0
    step_s: float = 0.5


def remove_dc_offset(stream):
    """Subtract each channel's mean over the whole stream.

    Accepts a UniformStream or a raw array (channels last axis = time).
    """
    values = stream.values if isinstance(stream, UniformStream) else np.asarray(stream, dtype=float)
    if values.size == 0:
        raise SignalError("cannot remove DC offset from an empty stream")
    out = values - values.mean(axis=-1, keepdims=True)
    if isinstance(stream, UniformStream):
        return UniformStream(stream.rate_hz, stream.start_t, out)
    return out


def resample_uniform(t, values, target_rate_hz: float, span: tuple[float, float]) -> UniformStream:
    """Linear interpolation of a timestamped channel onto a grid anchored at span[0].

    ``values`` is (n,) or (channels, n). Grid points up to one raw period
    outside the raw coverage take the edge value; further out is an error.
    """
    t = np.asarray(t, dtype=float)
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if t.ndim != 1 or len(t) < 2:
        raise SignalError("resampling needs at least two raw samples")
    if v.shape[1] != len(t):
        raise SignalError(f"{v.shape[1]} values for {len(t)} timestamps")
    t0, t1 = map(float, span)
    if t1 < t0:
        raise SignalError(f"empty span {span}")
    period = float(np.max(np.diff(t)))
    if t0 < t[0] - period - 1e-9 or t1 > t[-1] + period + 1e-9:
        raise SignalError(f"span {span} exceeds raw coverage [{t[0]}, {t[-1]}] by more than one period")
    n = int(np.floor((t1 - t0) * target_rate_hz + 1e-9)) + 1
    grid = t0 + np.arange(n) / target_rate_hz
    out = np.stack([np.interp(grid, t, ch) for ch in v])
    return UniformStream(target_rate_hz, t0, out)


def butter_sos(cutoff_hz: float, rate_hz: float, order: int = 4) -> np.ndarray:
    if order < 1:
        raise SignalError("filter order must be >= 1")
    if not 0 < cutoff_hz < rate_hz / 2:
        raise SignalError(f"cutoff {cutoff_hz} Hz must lie in (0, {rate_hz / 2}) Hz")
    return sps.butter(order, cutoff_hz, btype="low", fs=rate_hz, output="sos")


def butterworth_lowpass(stream: UniformStream, cutoff_hz: float, order: int = 4) -> UniformStream:
    """Zero-phase (forward-backward) digital Butterworth low-pass."""
    sos = butter_sos(cutoff_hz, stream.rate_hz, order)
    x = stream.values
    padlen = min(3 * (2 * len(sos) + 1), x.shape[1] - 1)
    y = sps.sosfiltfilt(sos, x, axis=-1, padlen=max(padlen, 0))
    return UniformStream(stream.rate_hz, stream.start_t, y)


@dataclass
class WindowDataset:
    windows: np.ndarray  # float32 (n, channels, win)
    labels: np.ndarray  # int64 class ids 1..4
    participant: np.ndarray
    session: np.ndarray
    start_t: np.ndarray
    mode: str = TEACHER
    warning: bool = False
    config_hash: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    def subset(self, mask) -> "WindowDataset":
        m = np.asarray(mask)
        return WindowDataset(self.windows[m], self.labels[m], self.participant[m], self.session[m],
                             self.start_t[m], self.mode, self.warning, self.config_hash)

    def student_view(self) -> "WindowDataset":
        if self.mode == STUDENT:
            return self
        return WindowDataset(np.ascontiguousarray(self.windows[:, :3]), self.labels, self.participant,
                             self.session, self.start_t, STUDENT, self.warning, self.config_hash)

    def sessions(self) -> list[tuple[int, int]]:
        pairs = np.unique(np.stack([self.participant, self.session], axis=1), axis=0)
        return [tuple(map(int, p)) for p in pairs]

    def select_sessions(self, pairs) -> "WindowDataset":
        keys = self.participant.astype(np.int64) * 1000 + self.session
        wanted = np.array([p * 1000 + s for p, s in pairs], dtype=np.int64)
        return self.subset(np.isin(keys, wanted))

    def class_counts(self) -> dict[int, int]:
        return {c: int(np.sum(self.labels == c)) for c in (1, 2, 3, 4)}

    @staticmethod
    def concat(parts: list["WindowDataset"]) -> "WindowDataset":
        if not parts:
            raise SignalError("nothing to concatenate")
        modes = {p.mode for p in parts}
        if len(modes) != 1:
            raise SignalError(f"mixed dataset modes {modes}")
        return WindowDataset(
            np.concatenate([p.windows for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.participant for p in parts]),
            np.concatenate([p.session for p in parts]),
            np.concatenate([p.start_t for p in parts]),
            parts[0].mode,
            any(p.warning for p in parts),
            parts[0].config_hash,
        )


def slide_windows(
    stream: UniformStream,
    labels,
    win_s: float = 2.0,
    step_s: float = 0.5,
    participant_id: int = 0,
    session_id: int = 0,
    mode: str = TEACHER,
) -> WindowDataset:
    """Cut overlapping windows; each label is the window's majority class.

    Ties go to the lowest class id. A stream shorter than one window gives
    an empty dataset with ``warning`` set.
    """
    win = int(round(win_s * stream.rate_hz))
    step = int(round(step_s * stream.rate_hz))
    labels = np.asarray(labels, dtype=np.int64)
    n = stream.n_samples
    if len(labels) != n:
        raise SignalError(f"{len(labels)} labels for {n} samples")
    c = stream.values.shape[0]
    if n < win:
        warnings.warn(f"stream of {n} samples is shorter than one {win}-sample window", stacklevel=2)
        empty = np.zeros(0, dtype=np.int64)
        return WindowDataset(np.zeros((0, c, win), np.float32), empty, empty.copy(), empty.copy(),
                             np.zeros(0), mode, warning=True)
    starts = np.arange(0, n - win + 1, step)
    idx = starts[:, None] + np.arange(win)[None, :]
    windows = stream.values[:, idx].transpose(1, 0, 2).astype(np.float32)
    onehot = (labels[:, None] == np.arange(1, 5)[None, :]).astype(np.int64)
    cs = np.vstack([np.zeros((1, 4), np.int64), np.cumsum(onehot, axis=0)])
    counts = cs[starts + win] - cs[starts]
    wl = np.argmax(counts, axis=1) + 1
    k = len(starts)
    return WindowDataset(
        np.ascontiguousarray(windows),
        wl.astype(np.int64),
        np.full(k, participant_id, dtype=np.int64),
        np.full(k, session_id, dtype=np.int64),
        stream.start_t + starts / stream.rate_hz,
        mode,
    )


def common_span(rec: SessionRecording) -> tuple[float, float]:
    starts = [t[0] for t, _ in rec.rssi] + [rec.us_t[0]]
    ends = [t[-1] for t, _ in rec.rssi] + [rec.us_t[-1]]
    return float(max(starts)), float(min(ends))


def preprocess_session(rec: SessionRecording, mode: str = TEACHER, cfg: PreprocessConfig | None = None) -> WindowDataset:
    if mode not in MODES:
        raise SignalError(f"unknown mode {mode!r}")
    cfg = cfg or PreprocessConfig()
    span = common_span(rec)
    rssi = []
    for t, v in rec.rssi:
        centered = remove_dc_offset(v)
        rssi.append(resample_uniform(t, centered, cfg.rate_hz, span).values[0])
    rs = butterworth_lowpass(UniformStream(cfg.rate_hz, span[0], np.stack(rssi)), cfg.rssi_cutoff_hz, cfg.filter_order)
    us = resample_uniform(rec.us_t, rec.us_xyz.T, cfg.rate_hz, span)
    us = butterworth_lowpass(us, cfg.us_cutoff_hz, cfg.filter_order)
    stacked = UniformStream(cfg.rate_hz, span[0], np.vstack([rs.values, us.values]))
    grid_labels = rec.label_at(stacked.times)
    ds = slide_windows(stacked, grid_labels, cfg.win_s, cfg.step_s, rec.participant_id, rec.session_id, TEACHER)
    ds.config_hash = rec.config_hash
    return ds.student_view() if mode == STUDENT else ds


# -- BSWD container -----------------------------------------------------------

_MAGIC = b"BSWD"
_VERSION = 1
_HEADER = struct.Struct("<4sHBxIII")
_INDEX = np.dtype([("label", "<i4"), ("participant", "<i4"), ("session", "<i4"), ("start_t", "<f8")])


def save_dataset(ds: WindowDataset, path: str | Path, extra: dict | None = None) -> Path:
    """Write the binary container plus a ``.meta.json`` sidecar (``extra`` is merged into it)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, c, w = ds.windows.shape
    index = np.zeros(n, dtype=_INDEX)
    index["label"] = ds.labels
    index["participant"] = ds.participant
    index["session"] = ds.session
    index["start_t"] = ds.start_t
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, MODES.index(ds.mode), n, c, w))
        fh.write(np.ascontiguousarray(ds.windows, dtype="<f4").tobytes())
        fh.write(index.tobytes())
    meta = {
        "mode": ds.mode,
        "channels": list(CHANNELS[ds.mode]),
        "num_windows": n,
        "window_length": w,
        "class_counts": {str(k): v for k, v in ds.class_counts().items()},
        "sessions": [list(p) for p in ds.sessions()] if n else [],
        "config_hash": ds.config_hash,
        "warning": ds.warning,
        **(extra or {}),
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path: str | Path) -> WindowDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SignalError(f"{path}: truncated header")
    magic, version, mode, n, c, w = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise SignalError(f"{path}: not a version-{_VERSION} window dataset")
    off = _HEADER.size
    nbytes = n * c * w * 4
    windows = np.frombuffer(raw, dtype="<f4", count=n * c * w, offset=off).reshape(n, c, w).astype(np.float32)
    index = np.frombuffer(raw, dtype=_INDEX, count=n, offset=off + nbytes)
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    return WindowDataset(
        windows,
        index["label"].astype(np.int64),
        index["participant"].astype(np.int64),
        index["session"].astype(np.int64),
        index["start_t"].astype(np.float64),
        MODES[mode],
        bool(meta.get("warning", False)),
        str(meta.get("config_hash", "")),
    )
