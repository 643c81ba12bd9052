"""Experiment configuration: dataclasses, TOML loading, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .distill import KdConfig, TrainConfig, baseline_config, teacher_config
from .signal import PreprocessConfig
from .sim import MapConfig, RadioParams, UltrasoundParams, WalkParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass
class ScenarioConfig:
    map: MapConfig = field(default_factory=MapConfig)
    # iid shadowing averages out within a window; the correlated component keeps RSSI ambiguous
    radio: RadioParams = field(default_factory=lambda: RadioParams(slow_fade_sigma_db=6.0, slow_fade_tau_s=10.0))
    ultrasound: UltrasoundParams = field(default_factory=UltrasoundParams)
    walk: WalkParams = field(default_factory=WalkParams)
    # fixed module order; None draws a seeded permutation of 1..4 per session
    plan: list[int] | None = None


@dataclass
class CohortConfig:
    n_full: int = 10
    n_short: int = 2
    short_sessions: list[int] = field(default_factory=lambda: [3, 4])
    sessions: int = 5
    duration_s: float = 1200.0

    def __post_init__(self):
        if self.n_full < 0 or self.n_short < 0 or self.sessions < 1 or not self.duration_s > 0:
            raise ValueError("cohort sizes must be non-negative and durations positive")
        if self.n_short and len(self.short_sessions) < 1:
            raise ValueError("short_sessions needs an entry per short participant pattern")
        if any(not 1 <= s < self.sessions for s in self.short_sessions):
            raise ValueError(f"short participants must have between 1 and {self.sessions - 1} sessions")


@dataclass
class ExperimentConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    cohort: CohortConfig = field(default_factory=CohortConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    teacher: TrainConfig = field(default_factory=teacher_config)
    baseline: TrainConfig = field(default_factory=baseline_config)
    kd: KdConfig = field(default_factory=KdConfig)
    variants: list[int] = field(default_factory=lambda: [1, 2, 3])
    out_dir: str = "runs/default"
    jobs: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def result_dict(self) -> dict:
        """Everything that can change results: all fields except out_dir and jobs."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("jobs")
        return d

    def config_hash(self) -> str:
        d = self.result_dict()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _find_line(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(rf"^\s*(\[+\s*)?[\w.]*\b{re.escape(key)}\b")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


def _build(cls, data, path_keys, text, src):
    if not isinstance(data, dict):
        raise ConfigError(f"section [{'.'.join(path_keys)}] must be a table", _find_line(text, path_keys[-1]), src)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key {'.'.join(path_keys + [key])!r}", _find_line(text, key), src)
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, path_keys + [key], text, src)
        else:
            kwargs[key] = _coerce(hint, value, path_keys + [key], text, src)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        key = next(iter(data), path_keys[-1] if path_keys else "")
        raise ConfigError(f"[{'.'.join(path_keys) or 'top level'}] {exc}", _find_line(text, key), src) from None


def _coerce(hint, value, keys, text, src):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or type(hint).__name__ == "UnionType":
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, keys, text, src)
    if origin in (tuple, list):
        if not isinstance(value, list):
            raise ConfigError(f"{'.'.join(keys)} must be an array", _find_line(text, keys[-1]), src)
        return origin(value) if origin is tuple else list(value)
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint in (str, bool) and isinstance(value, hint):
        return value
    if hint in (int, float, str, bool):
        raise ConfigError(f"{'.'.join(keys)} must be of type {hint.__name__}, got {value!r}",
                          _find_line(text, keys[-1]), src)
    return value


def config_from_dict(data: dict, text: str | None = None, src: str | None = None) -> ExperimentConfig:
    return _build(ExperimentConfig, data, [], text, src)


def load_config(path: str | Path | None = None, env: dict | None = None) -> ExperimentConfig:
    """Parse a TOML experiment file; absent keys take defaults.

    ``BLEKD_OUT`` and ``BLEKD_JOBS`` in the environment override ``out_dir``
    and ``jobs``.
    """
    env = os.environ if env is None else env
    if path is None:
        cfg = ExperimentConfig()
    else:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=str(p)) from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(str(exc), int(m.group(1)) if m else None, str(p)) from None
        cfg = config_from_dict(data, text, str(p))
    if env.get("BLEKD_OUT"):
        cfg.out_dir = env["BLEKD_OUT"]
    if env.get("BLEKD_JOBS"):
        try:
            cfg.jobs = int(env["BLEKD_JOBS"])
        except ValueError:
            raise ConfigError(f"BLEKD_JOBS must be an integer, got {env['BLEKD_JOBS']!r}") from None
    return cfg
