"""Speed, travel direction, and road type derived from tracks.

Everything here stays in pixel units on purpose: the engine is calibration
free, so speeds are px/s and no homography is ever applied.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .core import Track
from .errors import InsufficientDataError, ValidationError

ROAD_FREEWAY = "freeway"
ROAD_INTERSECTION = "intersection"


def estimate_speed(track: Track, window_ms: int = 2000) -> float:
    """Mean centroid speed (px/s) over the trailing window of a track.

    Computed as path length between consecutive centroids inside the window
    divided by the elapsed time. Needs at least 2 samples in the window.
    """
    if window_ms <= 0:
        raise ValidationError("window_ms must be positive")
    cutoff = track.last.timestamp_ms - window_ms
    pts = [
        (d.timestamp_ms, d.center) for d in track.detections if d.timestamp_ms >= cutoff
    ]
    if len(pts) < 2:
        raise InsufficientDataError(
            f"need >= 2 samples within {window_ms} ms, have {len(pts)}"
        )
    path = 0.0
    for (_, a), (_, b) in zip(pts, pts[1:]):
        path += math.dist(a, b)
    dt_s = (pts[-1][0] - pts[0][0]) / 1000.0
    if dt_s <= 0:
        raise InsufficientDataError("window has no elapsed time")
    return path / dt_s


def dominant_direction(track: Track, min_displacement_px: float = 10.0) -> str | None:
    """Net travel direction of a track, quantized to N/S/E/W (y grows down).

    Ties between axes resolve to the horizontal one. Returns None when the
    net displacement is shorter than min_displacement_px.
    """
    x0, y0 = track.first.center
    x1, y1 = track.last.center
    dx = x1 - x0
    dy = y1 - y0
    if math.hypot(dx, dy) < min_displacement_px:
        return None
    if abs(dx) >= abs(dy):
        return "E" if dx > 0 else "W"
    return "S" if dy > 0 else "N"


@dataclass
class DirectionHistogram:
    """Per-direction counts of tracks whose dominant direction is that bin."""

    counts: dict[str, int] = field(default_factory=lambda: {"N": 0, "S": 0, "E": 0, "W": 0})

    def add(self, direction: str | None) -> None:
        if direction is None:
            return
        if direction not in self.counts:
            raise ValidationError(f"unknown direction {direction!r}")
        self.counts[direction] += 1

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def detected(self, min_support: int) -> frozenset[str]:
        return frozenset(d for d, n in self.counts.items() if n >= min_support)

    @classmethod
    def from_tracks(cls, tracks, min_displacement_px: float = 10.0) -> "DirectionHistogram":
        hist = cls()
        for t in tracks:
            hist.add(dominant_direction(t, min_displacement_px))
        return hist


def default_min_support(total_tracks: int) -> int:
    """Support floor for a direction to count as detected: stray tracks must
    not flip the road type."""
    return max(3, math.ceil(0.05 * total_tracks))


def classify_road_type(hist: DirectionHistogram, min_support: int = 3) -> str:
    """More than two detected travel directions means an intersection,
    otherwise a freeway."""
    if min_support < 1:
        raise ValidationError("min_support must be >= 1")
    detected = hist.detected(min_support)
    return ROAD_INTERSECTION if len(detected) > 2 else ROAD_FREEWAY


class SpeedSampler:
    """Incremental per-track speed over a trailing time window.

    Feed (track_id, timestamp_ms, center) as frames arrive; speed() returns
    the windowed px/s once two samples are in the window, else None. Tracks
    that finish should be dropped to free state.
    """

    def __init__(self, window_ms: int = 2000):
        if window_ms <= 0:
            raise ValidationError("window_ms must be positive")
        self.window_ms = window_ms
        self._points: dict[int, deque] = {}

    def update(self, track_id: int, timestamp_ms: int, center: tuple[float, float]) -> float | None:
        pts = self._points.get(track_id)
        if pts is None:
            pts = deque()
            self._points[track_id] = pts
        pts.append((timestamp_ms, center))
        cutoff = timestamp_ms - self.window_ms
        while pts and pts[0][0] < cutoff:
            pts.popleft()
        return self.speed(track_id)

    def speed(self, track_id: int) -> float | None:
        pts = self._points.get(track_id)
        if pts is None or len(pts) < 2:
            return None
        dt_s = (pts[-1][0] - pts[0][0]) / 1000.0
        if dt_s <= 0:
            return None
        path = 0.0
        prev = None
        for _, c in pts:
            if prev is not None:
                path += math.dist(prev, c)
            prev = c
        return path / dt_s

    def drop(self, track_id: int) -> None:
        self._points.pop(track_id, None)

    def __contains__(self, track_id: int) -> bool:
        return track_id in self._points
