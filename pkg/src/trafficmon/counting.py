"""Line-crossing vehicle counts.

Counting lines are directed segments drawn across a lane or approach. A track
is counted the first time its center path crosses the line, attributed to the
side it arrived on. Duplicate detections are collapsed before tracking so one
physical vehicle cannot be counted twice.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

from .core import iou
from .errors import MetricUndefinedError, ValidationError

if TYPE_CHECKING:
    from .ingest import FrameDetections
    from .tracking import TrackEvents

DIRECTIONS = ("N", "S", "E", "W")

OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}


@dataclass(frozen=True, slots=True)
class CountingLine:
    """Directed gate segment. ``positive_dir`` names travel toward the positive
    half-plane, i.e. the side where cross((p2-p1), (q-p1)) > 0."""

    label: str
    p1: tuple[float, float]
    p2: tuple[float, float]
    positive_dir: str

    def __post_init__(self) -> None:
        if self.p1 == self.p2:
            raise ValidationError(f"counting line {self.label!r} has zero length")
        if self.positive_dir not in DIRECTIONS:
            raise ValidationError(
                f"positive_dir must be one of {DIRECTIONS}, got {self.positive_dir!r}"
            )

    def side(self, q: tuple[float, float]) -> float:
        dx = self.p2[0] - self.p1[0]
        dy = self.p2[1] - self.p1[1]
        return dx * (q[1] - self.p1[1]) - dy * (q[0] - self.p1[0])

    def crossing_direction(
        self, a: tuple[float, float], b: tuple[float, float]
    ) -> str | None:
        """Direction label if the segment a->b crosses this line, else None.

        Touching an endpoint counts as a crossing. Motion wholly along the
        line (both endpoints collinear with it) does not.
        """
        o1 = self.side(a)
        o2 = self.side(b)
        if o1 == 0.0 and o2 == 0.0:
            return None
        if (o1 > 0) == (o2 > 0) and o1 != 0.0 and o2 != 0.0:
            return None
        # a->b straddles the infinite line; confirm within the segment extent
        o3 = _orient(a, b, self.p1)
        o4 = _orient(a, b, self.p2)
        if (o3 > 0) == (o4 > 0) and o3 != 0.0 and o4 != 0.0:
            return None
        sign = o2 if o2 != 0.0 else -o1
        return self.positive_dir if sign > 0 else OPPOSITE[self.positive_dir]


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


@dataclass(frozen=True, slots=True)
class CrossingEvent:
    line_label: str
    track_id: int
    class_label: str
    direction: str
    timestamp_ms: int


@dataclass
class CountTally:
    """Accumulated crossings, keyed by (line label, class, direction).

    counted_track_ids guarantees a track contributes at most once per line.
    """

    counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    events: list[CrossingEvent] = field(default_factory=list)
    counted_track_ids: dict[str, set[int]] = field(default_factory=dict)

    def record(self, event: CrossingEvent) -> None:
        key = (event.line_label, event.class_label, event.direction)
        self.counts[key] = self.counts.get(key, 0) + 1
        self.counted_track_ids.setdefault(event.line_label, set()).add(event.track_id)
        self.events.append(event)

    def already_counted(self, line_label: str, track_id: int) -> bool:
        return track_id in self.counted_track_ids.get(line_label, ())

    def total(self, line_label: str | None = None) -> int:
        if line_label is None:
            return sum(self.counts.values())
        return sum(n for (lbl, _, _), n in self.counts.items() if lbl == line_label)


def dedup_detections(frame: "FrameDetections", iou_threshold: float = 0.5) -> "FrameDetections":
    """Drop same-class duplicates that overlap a higher-scoring detection.

    Greedy: detections are visited in descending score order (ties keep input
    order) and suppressed when IOU with an already-kept detection of the same
    class exceeds the threshold. Survivors keep their original order.
    """
    dets = frame.detections
    if len(dets) <= 1:
        return frame
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[int] = []
    for i in order:
        d = dets[i]
        dup = False
        for j in kept:
            k = dets[j]
            if k.class_label == d.class_label and iou(k.box, d.box) > iou_threshold:
                dup = True
                break
        if not dup:
            kept.append(i)
    if len(kept) == len(dets):
        return frame
    kept.sort()
    return replace(frame, detections=tuple(dets[i] for i in kept))


def counting_step(
    tally: CountTally,
    events: "TrackEvents",
    lines: Sequence[CountingLine],
) -> list[CrossingEvent]:
    """Update the tally from one tracker step; returns new crossing events.

    A track is counted at most once per line, at the first segment of its
    center path that crosses it, under its majority class at that moment.
    """
    new: list[CrossingEvent] = []
    for tid, prev_det, det, majority_cls in events.extended:
        a = prev_det.center
        b = det.center
        if a == b:
            continue
        for line in lines:
            if tally.already_counted(line.label, tid):
                continue
            direction = line.crossing_direction(a, b)
            if direction is None:
                continue
            ev = CrossingEvent(
                line_label=line.label,
                track_id=tid,
                class_label=majority_cls,
                direction=direction,
                timestamp_ms=det.timestamp_ms,
            )
            tally.record(ev)
            new.append(ev)
    return new


def count_percentage(detected: int, ground_truth: int) -> float:
    """Detected counts as a percentage of ground truth (100.0 = exact)."""
    if ground_truth <= 0:
        raise MetricUndefinedError("count percentage needs a positive ground truth")
    return 100.0 * detected / ground_truth


def counts_to_csv(tally: CountTally, window_s: int = 60) -> str:
    """Crossings bucketed into fixed windows, one CSV row per
    (line, class, direction, window)."""
    if window_s <= 0:
        raise ValidationError("window_s must be positive")
    bucket: dict[tuple[str, str, str, int], int] = {}
    for ev in tally.events:
        w = (ev.timestamp_ms // 1000 // window_s) * window_s
        key = (ev.line_label, ev.class_label, ev.direction, w)
        bucket[key] = bucket.get(key, 0) + 1
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["line", "class", "direction", "window_start_s", "count"])
    for (lbl, cls, direction, w), n in sorted(bucket.items()):
        writer.writerow([lbl, cls, direction, w, n])
    return out.getvalue()
