"""Factory floor geometry: module work zones, receivers, beacons."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class SimError(ValueError):
    """Base class for simulator input errors."""


class GeometryError(SimError):
    pass


class PlacementError(SimError):
    pass


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, x, y, tol: float = 1e-9):
        return (x >= self.x0 - tol) & (x <= self.x1 + tol) & (y >= self.y0 - tol) & (y <= self.y1 + tol)

    def distance(self, x, y):
        """Euclidean distance from point(s) to the rectangle (0 inside)."""
        dx = np.maximum(np.maximum(self.x0 - x, 0.0), x - self.x1)
        dy = np.maximum(np.maximum(self.y0 - y, 0.0), y - self.y1)
        return np.hypot(dx, dy)

    def gap(self, other: "Rect") -> float:
        dx = max(other.x0 - self.x1, self.x0 - other.x1, 0.0)
        dy = max(other.y0 - self.y1, self.y0 - other.y1, 0.0)
        return float(np.hypot(dx, dy))

    def overlaps(self, other: "Rect") -> bool:
        return self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1


@dataclass(frozen=True)
class FactoryMap:
    modules: tuple[Rect, ...]  # module id = index + 1
    receivers: tuple[tuple[float, float], ...]
    beacons: tuple[tuple[float, float], ...]
    walkable_region: Rect
    occlusion_zones: tuple[Rect, ...] = ()
    aisle_y: float | None = None

    @property
    def module_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.modules) + 1))

    def module(self, module_id: int) -> Rect:
        return self.modules[module_id - 1]

    def label_at(self, x, y) -> np.ndarray:
        """Module containing each point, else the nearest module (first on ties)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = np.stack([m.distance(x, y) for m in self.modules], axis=-1)
        return (np.argmin(d, axis=-1) + 1).astype(np.int64)

    def occluded(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for z in self.occlusion_zones:
            out |= z.contains(x, y, tol=0.0)
        return out


@dataclass
class MapConfig:
    width_m: float = 12.0
    height_m: float = 8.0
    modules: list[tuple[float, float, float, float]] | None = None
    receivers: list[tuple[float, float]] | None = None
    beacons: list[tuple[float, float]] | None = None
    occlusion_zones: list[tuple[float, float, float, float]] | None = None
    aisle_y: float | None = None
    min_gap_m: float = 2.0
    min_area_ratio: float = 2.5

    # Module 1 is 6 m x 2 m along the top wall, modules 2-4 are 2 m x 2 m.
    # Modules 3 and 4 share receiver 3; the strip behind them is the
    # ultrasound blind corridor.
    DEFAULT_MODULES = [(0.5, 5.5, 6.5, 7.5), (8.5, 5.5, 10.5, 7.5), (2.0, 1.5, 4.0, 3.5), (6.0, 1.5, 8.0, 3.5)]
    DEFAULT_RECEIVERS = [(3.5, 4.5), (9.5, 4.5), (5.0, 2.5)]
    DEFAULT_BEACONS = [(0.5, 7.5), (6.5, 7.5), (10.5, 5.5), (8.0, 3.5)]
    DEFAULT_OCCLUSION = [(1.5, 0.0, 8.5, 1.5)]
    DEFAULT_AISLE_Y = 4.5


def build_factory_map(config: MapConfig | None = None) -> FactoryMap:
    """Validate a map configuration and return the corresponding FactoryMap.

    Raises GeometryError for overlapping, too-close or wrongly sized modules
    and PlacementError for receivers/beacons outside the walkable region.
    """
    cfg = config or MapConfig()
    if cfg.width_m <= 0 or cfg.height_m <= 0:
        raise GeometryError("map dimensions must be positive")
    region = Rect(0.0, 0.0, float(cfg.width_m), float(cfg.height_m))
    modules = tuple(Rect(*map(float, m)) for m in (cfg.modules or MapConfig.DEFAULT_MODULES))
    receivers = tuple(tuple(map(float, p)) for p in (cfg.receivers or MapConfig.DEFAULT_RECEIVERS))
    beacons = tuple(tuple(map(float, p)) for p in (cfg.beacons or MapConfig.DEFAULT_BEACONS))
    zones_src = MapConfig.DEFAULT_OCCLUSION if cfg.occlusion_zones is None else cfg.occlusion_zones
    zones = tuple(Rect(*map(float, z)) for z in zones_src)

    if len(modules) != 4:
        raise GeometryError(f"expected 4 modules, got {len(modules)}")
    for m in modules:
        if not (region.contains(m.x0, m.y0) and region.contains(m.x1, m.y1)):
            raise GeometryError(f"module {m} extends outside the walkable region")
    for (i, a), (j, b) in itertools.combinations(enumerate(modules, 1), 2):
        if a.overlaps(b):
            raise GeometryError(f"modules {i} and {j} overlap")
        if a.gap(b) < cfg.min_gap_m - 1e-9:
            raise GeometryError(f"modules {i} and {j} are {a.gap(b):.2f} m apart (< {cfg.min_gap_m} m)")
    for i, m in enumerate(modules[1:], 2):
        if modules[0].area < cfg.min_area_ratio * m.area:
            raise GeometryError(
                f"module 1 area {modules[0].area:.2f} is less than {cfg.min_area_ratio}x module {i} area {m.area:.2f}"
            )

    if len(receivers) != 3:
        raise PlacementError(f"expected 3 receivers, got {len(receivers)}")
    if len(beacons) < 3:
        raise PlacementError(f"expected at least 3 beacons, got {len(beacons)}")
    for kind, pts in (("receiver", receivers), ("beacon", beacons)):
        for p in pts:
            if len(p) != 2 or not bool(region.contains(p[0], p[1], tol=0.0)):
                raise PlacementError(f"{kind} at {p} lies outside the walkable region")

    aisle = cfg.aisle_y if cfg.aisle_y is not None else (
        MapConfig.DEFAULT_AISLE_Y if cfg.modules is None else None
    )
    return FactoryMap(modules, receivers, beacons, region, zones, aisle)
