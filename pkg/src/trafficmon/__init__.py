"""Detector-agnostic traffic monitoring: tracking, stationary-vehicle
anomalies, queue severity, and per-class counts over detection logs."""

from .core import BoundingBox, Detection, Track, VEHICLE_CLASSES, cosine_distance, iou
from .errors import (
    DuplicateCameraError,
    EngineError,
    GeometryError,
    InsufficientDataError,
    InvalidInputError,
    MaskDecodeError,
    MetricUndefinedError,
    ParseError,
    SequencingError,
    UnknownCameraError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Detection",
    "Track",
    "VEHICLE_CLASSES",
    "cosine_distance",
    "iou",
    "EngineError",
    "GeometryError",
    "InvalidInputError",
    "ValidationError",
    "DuplicateCameraError",
    "ParseError",
    "MaskDecodeError",
    "SequencingError",
    "InsufficientDataError",
    "MetricUndefinedError",
    "UnknownCameraError",
    "__version__",
]
