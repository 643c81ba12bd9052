"""Synthetic smart-factory sessions standing in for recorded data."""

from .geometry import FactoryMap, GeometryError, MapConfig, PlacementError, Rect, SimError, build_factory_map
from .radio import (
    RadioParams,
    UltrasoundParams,
    mean_rssi,
    quantize,
    synthesize_rssi,
    synthesize_ultrasound,
)
from .session import SessionRecording, generate_session, list_session_dirs, read_session, write_session
from .walk import PlanError, TrajectoryTrace, WalkParams, generate_walk

__all__ = [
    "FactoryMap", "GeometryError", "MapConfig", "PlacementError", "PlanError", "RadioParams", "Rect",
    "SessionRecording", "SimError", "TrajectoryTrace", "UltrasoundParams", "WalkParams",
    "build_factory_map", "generate_session", "generate_walk", "list_session_dirs", "mean_rssi",
    "quantize", "read_session", "synthesize_rssi", "synthesize_ultrasound", "write_session",
]
