"""Shared domain types and the primitive similarity measures used everywhere else.

Coordinate convention: image origin at top-left, x grows right, y grows down.
All pixel quantities are in image pixels; nothing here is calibrated to
real-world units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import GeometryError, InvalidInputError, ValidationError

VEHICLE_CLASSES = ("pedestrian", "cyclist", "car", "bus", "truck")

TRACK_STATES = ("tentative", "active", "finished")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box as (left, top, width, height)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise GeometryError(f"non-finite box {(self.x, self.y, self.w, self.h)}")
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(f"degenerate box w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 when identical."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if ix <= 0:
        return 0.0
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def cosine_distance(u: Sequence[float], v: Sequence[float]) -> float:
    """1 - cos(angle between u and v); in [0, 2]."""
    if len(u) != len(v):
        raise InvalidInputError(f"dimension mismatch: {len(u)} vs {len(v)}")
    dot = nu = nv = 0.0
    for a, b in zip(u, v):
        dot += a * b
        nu += a * a
        nv += b * b
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("cosine distance undefined for zero vector")
    return 1.0 - dot / math.sqrt(nu * nv)


@dataclass(frozen=True, slots=True)
class Detection:
    """One detected object in one frame, as produced by an upstream detector."""

    frame_index: int
    timestamp_ms: int
    class_label: str
    box: BoundingBox
    score: float
    embedding: tuple[float, ...] | None = None
    mask_ref: str | None = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"negative frame_index {self.frame_index}")
        if self.class_label not in VEHICLE_CLASSES:
            raise ValidationError(f"unknown class label {self.class_label!r}")
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"score {self.score} outside [0, 1]")
        if self.embedding is not None:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > 1e-6:
                raise ValidationError(f"embedding norm {norm} != 1")

    @property
    def center(self) -> tuple[float, float]:
        return self.box.center


@dataclass(frozen=True)
class Track:
    """A time-ordered run of detections sharing one identity."""

    track_id: int
    detections: tuple[Detection, ...]
    state: str = "finished"

    def __post_init__(self):
        if not self.detections:
            raise ValidationError("track has no detections")
        if self.state not in TRACK_STATES:
            raise ValidationError(f"unknown track state {self.state!r}")
        frames = [d.frame_index for d in self.detections]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError("track frame indices not strictly increasing")

    def __len__(self) -> int:
        return len(self.detections)

    @property
    def first(self) -> Detection:
        return self.detections[0]

    @property
    def last(self) -> Detection:
        return self.detections[-1]

    @property
    def class_label(self) -> str:
        """Majority class over the track's detections; ties broken by class order."""
        counts: dict[str, int] = {}
        for d in self.detections:
            counts[d.class_label] = counts.get(d.class_label, 0) + 1
        return max(VEHICLE_CLASSES, key=lambda c: counts.get(c, 0))


@dataclass(frozen=True)
class BitMask:
    """Sparse binary mask: the set of lit pixel coordinates inside a grid."""

    width: int
    height: int
    set_pixels: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise ValidationError("mask dimensions must be non-negative")
        for (px, py) in self.set_pixels:
            if not (0 <= px < self.width and 0 <= py < self.height):
                raise ValidationError(
                    f"pixel ({px}, {py}) outside {self.width}x{self.height} mask"
                )

    def __len__(self) -> int:
        return len(self.set_pixels)
