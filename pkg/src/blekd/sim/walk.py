"""Seeded worker trajectories: dwell at module work zones, walk between them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import FactoryMap, SimError


class PlanError(SimError):
    pass


@dataclass
class WalkParams:
    speed_range: tuple[float, float] = (0.8, 1.4)  # transit, m/s
    dwell_range: tuple[float, float] = (30.0, 120.0)  # s
    work_speed: float = 0.5  # m/s while moving inside a module
    pause_range: tuple[float, float] = (2.0, 10.0)  # s at each work spot
    margin_m: float = 0.3  # keep work spots away from module edges
    back_path_prob: float = 0.5
    hedge_height_m: float = 1.2
    gait_bob_m: float = 0.03
    trace_rate_hz: float = 20.0


@dataclass
class TrajectoryTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def position_at(self, t) -> np.ndarray:
        """Linearly interpolated (x, y, z) at arbitrary times, shape (len(t), 3)."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.t, c) for c in (self.x, self.y, self.z)], axis=-1)


def _work_spot(rng, rect, margin):
    mx = min(margin, 0.45 * (rect.x1 - rect.x0))
    my = min(margin, 0.45 * (rect.y1 - rect.y0))
    return np.array([rng.uniform(rect.x0 + mx, rect.x1 - mx), rng.uniform(rect.y0 + my, rect.y1 - my)])


def _shared_zone(fmap: FactoryMap, a: int, b: int):
    for z in fmap.occlusion_zones:
        if fmap.module(a).gap(z) < 1e-9 and fmap.module(b).gap(z) < 1e-9:
            return z
    return None


def generate_walk(
    seed: int,
    fmap: FactoryMap,
    plan: Sequence[int],
    duration_s: float,
    params: WalkParams | None = None,
) -> TrajectoryTrace:
    """Piecewise-linear walk following ``plan`` (cycled) for ``duration_s``.

    The walk starts with a dwell in the first planned module. Each dwell lasts
    a seeded 30-120 s during which the worker moves between random work spots
    inside the module; transits use a seeded constant speed and go via the
    aisle, or via a shared occluded corridor with probability
    ``back_path_prob``.
    """
    p = params or WalkParams()
    if not duration_s > 0:
        raise PlanError(f"duration must be positive, got {duration_s}")
    plan = [int(m) for m in plan]
    if not plan:
        raise PlanError("empty activity plan")
    unknown = sorted(set(plan) - set(fmap.module_ids))
    if unknown:
        raise PlanError(f"plan references unknown modules {unknown}")

    rng = np.random.default_rng(seed)
    # knots: (time, x, y, moving flag for the segment ending here)
    pos = _work_spot(rng, fmap.module(plan[0]), p.margin_m)
    times, pts, moving = [0.0], [pos], [False]
    t = 0.0

    def go(target, speed):
        nonlocal t, pos
        dist = float(np.hypot(*(target - pos)))
        if dist > 0:
            t += dist / speed
            times.append(t)
            pts.append(target)
            moving.append(True)
            pos = target

    def stay(dt):
        nonlocal t
        t += dt
        times.append(t)
        pts.append(pos)
        moving.append(False)

    k = 0
    while t < duration_s:
        module = plan[k % len(plan)]
        rect = fmap.module(module)
        if k > 0:
            prev = plan[(k - 1) % len(plan)]
            target = _work_spot(rng, rect, p.margin_m)
            speed = rng.uniform(*p.speed_range)
            if prev != module:
                zone = _shared_zone(fmap, prev, module)
                if zone is not None and rng.random() < p.back_path_prob:
                    lane = zone.center[1]
                elif fmap.aisle_y is not None:
                    lane = fmap.aisle_y
                else:
                    lane = None
                if lane is not None:
                    go(np.array([pos[0], lane]), speed)
                    go(np.array([target[0], lane]), speed)
            go(target, speed)
        dwell_end = t + rng.uniform(*p.dwell_range)
        while t < dwell_end:
            stay(min(rng.uniform(*p.pause_range), dwell_end - t))
            if t >= dwell_end:
                break
            go(_work_spot(rng, rect, p.margin_m), p.work_speed)
        k += 1

    knots_t = np.asarray(times)
    knots = np.asarray(pts)
    n = int(np.floor(duration_s * p.trace_rate_hz)) + 1
    ts = np.arange(n) / p.trace_rate_hz
    x = np.interp(ts, knots_t, knots[:, 0])
    y = np.interp(ts, knots_t, knots[:, 1])
    seg = np.clip(np.searchsorted(knots_t, ts, side="right"), 1, len(knots_t) - 1)
    walking = np.asarray(moving)[seg]
    z = p.hedge_height_m + walking * p.gait_bob_m * np.sin(2 * np.pi * 1.8 * ts)
    return TrajectoryTrace(ts, x, y, z, fmap.label_at(x, y))
