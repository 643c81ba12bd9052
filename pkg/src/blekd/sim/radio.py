"""BLE RSSI and ultrasound coordinate stream synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FactoryMap, SimError
from .walk import TrajectoryTrace

MIN_DISTANCE_M = 0.1


@dataclass
class RadioParams:
    tx_power_dbm: float = 4.0
    ref_loss_db: float = 60.0  # path loss at 1 m
    path_loss_exponent: float = 2.0
    shadow_sigma_db: float = 4.0
    rssi_rate_hz: float = 50.0
    rssi_resolution_db: float = 1.0
    # slow shadowing component: AR(1) with this correlation time (0 disables)
    slow_fade_sigma_db: float = 0.0
    slow_fade_tau_s: float = 5.0
    # constant per-session, per-receiver gain offset (re-wearing, antennas)
    receiver_offset_sigma_db: float = 0.0

    def __post_init__(self):
        if not self.rssi_rate_hz > 0:
            raise SimError("rssi_rate_hz must be positive")
        if not self.rssi_resolution_db > 0:
            raise SimError("rssi_resolution_db must be positive")
        if not 1.5 <= self.path_loss_exponent <= 4.0:
            raise SimError("path_loss_exponent must lie in [1.5, 4.0]")
        if self.shadow_sigma_db < 0 or self.slow_fade_sigma_db < 0 or self.receiver_offset_sigma_db < 0:
            raise SimError("noise levels must be non-negative")


@dataclass
class UltrasoundParams:
    noise_sigma_m: float = 0.02
    rate_hz: float = 10.0
    occlusion_dropout_prob: float = 0.6

    def __post_init__(self):
        if self.noise_sigma_m < 0:
            raise SimError("noise_sigma_m must be non-negative")
        if not self.rate_hz > 0:
            raise SimError("rate_hz must be positive")
        if not 0.0 <= self.occlusion_dropout_prob <= 1.0:
            raise SimError("occlusion_dropout_prob must lie in [0, 1]")


def mean_rssi(distance_m, rp: RadioParams):
    """Noise-free log-distance RSSI in dBm; distances are clamped to 0.1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    return rp.tx_power_dbm - rp.ref_loss_db - 10.0 * rp.path_loss_exponent * np.log10(d)


def quantize(values, resolution_db: float):
    return np.round(np.asarray(values) / resolution_db) * resolution_db


def jittered_times(rng, rate_hz: float, t0: float, t1: float, jitter: float = 0.1) -> np.ndarray:
    """Sample instants with periods drawn uniformly from (1 +/- jitter) / rate."""
    period = 1.0 / rate_hz
    n_max = int(np.ceil((t1 - t0) * rate_hz / (1 - jitter))) + 2
    steps = period * (1.0 + rng.uniform(-jitter, jitter, size=n_max))
    steps[0] = period * rng.uniform(0.0, jitter)
    t = t0 + np.cumsum(steps)
    return t[t <= t1]


def _ar1(rng, t, sigma, tau):
    if sigma == 0 or len(t) == 0:
        return np.zeros(len(t))
    out = np.empty(len(t))
    out[0] = rng.normal(0.0, sigma)
    dt = np.diff(t)
    a = np.exp(-dt / tau)
    w = rng.normal(0.0, 1.0, size=len(t) - 1) * sigma * np.sqrt(1 - a * a)
    for k in range(1, len(t)):
        out[k] = a[k - 1] * out[k - 1] + w[k - 1]
    return out


def synthesize_rssi(
    trace: TrajectoryTrace, fmap: FactoryMap, rp: RadioParams, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """One (timestamps, dBm values) pair per receiver.

    Each receiver has its own jittered ~rssi_rate_hz clock over the trace
    span. Values follow log-distance path loss in the 2D plane plus Gaussian
    shadowing, then are quantized to the RSSI resolution.
    """
    if len(trace) == 0:
        raise SimError("empty trajectory")
    rng = np.random.default_rng(seed)
    t0, t1 = float(trace.t[0]), float(trace.t[-1])
    channels = []
    for rx in fmap.receivers:
        t = jittered_times(rng, rp.rssi_rate_hz, t0, t1)
        xyz = trace.position_at(t)
        d = np.hypot(xyz[:, 0] - rx[0], xyz[:, 1] - rx[1])
        v = mean_rssi(d, rp)
        v = v + rng.normal(0.0, rp.receiver_offset_sigma_db) if rp.receiver_offset_sigma_db else v
        v = v + _ar1(rng, t, rp.slow_fade_sigma_db, rp.slow_fade_tau_s)
        if rp.shadow_sigma_db:
            v = v + rng.normal(0.0, rp.shadow_sigma_db, size=len(t))
        channels.append((t, quantize(v, rp.rssi_resolution_db)))
    return channels


def synthesize_ultrasound(
    trace: TrajectoryTrace, fmap: FactoryMap, up: UltrasoundParams, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Hedge coordinates on a regular ``rate_hz`` grid, shape (n, 3).

    Inside occlusion zones each sample is replaced by the previous emitted
    sample with probability ``occlusion_dropout_prob`` (sample-and-hold).
    """
    if len(trace) == 0:
        raise SimError("empty trajectory")
    rng = np.random.default_rng(seed)
    t0, t1 = float(trace.t[0]), float(trace.t[-1])
    n = int(np.floor((t1 - t0) * up.rate_hz + 1e-9)) + 1
    t = t0 + np.arange(n) / up.rate_hz
    true = trace.position_at(t)
    noisy = true + rng.normal(0.0, up.noise_sigma_m, size=true.shape) if up.noise_sigma_m else true.copy()
    drop = fmap.occluded(true[:, 0], true[:, 1]) & (rng.random(n) < up.occlusion_dropout_prob)
    drop[0] = False
    for k in np.flatnonzero(drop):
        noisy[k] = noisy[k - 1]
    return t, noisy
