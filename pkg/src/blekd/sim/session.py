"""Session composition and on-disk session directories."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import seeding
from .geometry import FactoryMap, SimError
from .radio import RadioParams, UltrasoundParams, synthesize_rssi, synthesize_ultrasound
from .walk import TrajectoryTrace, WalkParams, generate_walk


@dataclass
class SessionRecording:
    participant_id: int
    session_id: int
    rssi: list[tuple[np.ndarray, np.ndarray]]  # per receiver (t, dBm)
    us_t: np.ndarray
    us_xyz: np.ndarray  # (n, 3)
    label_t: np.ndarray
    label_c: np.ndarray
    seed: int = 0
    config_hash: str = ""
    trace: TrajectoryTrace | None = field(default=None, repr=False, compare=False)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.label_t[0]), float(self.label_t[-1])

    def label_at(self, t) -> np.ndarray:
        """Nearest-preceding label; times before the first label take the first."""
        idx = np.searchsorted(self.label_t, np.asarray(t, dtype=float), side="right") - 1
        return self.label_c[np.clip(idx, 0, len(self.label_c) - 1)]


def generate_session(
    seed: int,
    fmap: FactoryMap,
    plan: Sequence[int],
    duration_s: float,
    rp: RadioParams,
    up: UltrasoundParams,
    participant_id: int = 0,
    session_id: int = 0,
    walk: WalkParams | None = None,
    config_hash: str = "",
) -> SessionRecording:
    trace = generate_walk(seeding.derive(seed, "walk"), fmap, plan, duration_s, walk)
    rssi = synthesize_rssi(trace, fmap, rp, seeding.derive(seed, "rssi"))
    us_t, us_xyz = synthesize_ultrasound(trace, fmap, up, seeding.derive(seed, "ultrasound"))
    return SessionRecording(
        participant_id=participant_id,
        session_id=session_id,
        rssi=rssi,
        us_t=us_t,
        us_xyz=us_xyz,
        label_t=trace.t.copy(),
        label_c=trace.label.copy(),
        seed=int(seed),
        config_hash=config_hash,
        trace=trace,
    )


def session_dirname(participant_id: int, session_id: int) -> str:
    return f"p{participant_id:02d}_s{session_id}"


def _forward_fill(rssi):
    # round to the written precision first so coinciding stamps share one row
    rssi = [(np.round(t, 6), v) for t, v in rssi]
    t_all = np.unique(np.concatenate([t for t, _ in rssi]))
    cols = []
    for t, v in rssi:
        idx = np.searchsorted(t, t_all, side="right") - 1
        cols.append(v[np.clip(idx, 0, len(v) - 1)])
    return t_all, np.stack(cols, axis=1)


def write_session(rec: SessionRecording, root: str | Path) -> Path:
    """Write rssi.csv, us.csv, labels.csv and meta.json under ``root``.

    RSSI channels are merged onto the union of their timestamps with
    forward fill (leading gaps take the channel's first value).
    """
    d = Path(root) / session_dirname(rec.participant_id, rec.session_id)
    d.mkdir(parents=True, exist_ok=True)
    t_all, vals = _forward_fill(rec.rssi)
    np.savetxt(d / "rssi.csv", np.column_stack([t_all, vals]), fmt=["%.6f", "%g", "%g", "%g"],
               delimiter=",", header="t,rx1,rx2,rx3", comments="")
    np.savetxt(d / "us.csv", np.column_stack([rec.us_t, rec.us_xyz]), fmt="%.6f",
               delimiter=",", header="t,x,y,z", comments="")
    np.savetxt(d / "labels.csv", np.column_stack([rec.label_t, rec.label_c]), fmt=["%.6f", "%d"],
               delimiter=",", header="t,class", comments="")
    meta = {
        "participant": rec.participant_id,
        "session": rec.session_id,
        "seed": rec.seed,
        "config_hash": rec.config_hash,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def read_session(path: str | Path) -> SessionRecording:
    d = Path(path)
    for name in ("rssi.csv", "us.csv", "labels.csv", "meta.json"):
        if not (d / name).is_file():
            raise FileNotFoundError(f"missing stream file {d / name}")
    meta = json.loads((d / "meta.json").read_text())
    rs = np.loadtxt(d / "rssi.csv", delimiter=",", skiprows=1, ndmin=2)
    us = np.loadtxt(d / "us.csv", delimiter=",", skiprows=1, ndmin=2)
    lb = np.loadtxt(d / "labels.csv", delimiter=",", skiprows=1, ndmin=2)
    if rs.shape[1] != 4 or us.shape[1] != 4 or lb.shape[1] != 2:
        raise SimError(f"malformed stream files in {d}")
    return SessionRecording(
        participant_id=int(meta["participant"]),
        session_id=int(meta["session"]),
        rssi=[(rs[:, 0].copy(), rs[:, k].copy()) for k in (1, 2, 3)],
        us_t=us[:, 0].copy(),
        us_xyz=us[:, 1:].copy(),
        label_t=lb[:, 0].copy(),
        label_c=lb[:, 1].astype(np.int64),
        seed=int(meta.get("seed", 0)),
        config_hash=str(meta.get("config_hash", "")),
    )


def list_session_dirs(root: str | Path) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.json").is_file())
