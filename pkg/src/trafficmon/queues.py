"""Queue severity: mask pixel length, adaptive thresholds, severity binning, heatmaps.

The severity thresholds are calibration-free: they are derived purely from the
history of observed queue pixel lengths at one camera, binned by minute of day,
so queue levels can be compared across locations without camera geometry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .core import BitMask
from .errors import InsufficientDataError, ValidationError

SEVERITY_LEVELS = ("low", "medium", "high")

_SEVERITY_LETTER = {"low": "L", "medium": "M", "high": "H", None: "-"}

_MS_PER_DAY = 86_400_000


@dataclass(frozen=True, slots=True)
class QueueSample:
    """One observed queue pixel length at one camera and timestamp."""

    camera_id: str
    timestamp_ms: int
    pixel_length: float
    mask_id: str | None = None

    def __post_init__(self):
        if self.pixel_length < 0:
            raise ValidationError(f"negative pixel length {self.pixel_length}")


@dataclass(frozen=True, slots=True)
class SeverityThresholds:
    """Adaptive cut points (low, medium, high) plus the spread multiplier used."""

    low: float
    medium: float
    high: float
    k: float

    def __post_init__(self):
        for v in (self.low, self.medium, self.high, self.k):
            if not math.isfinite(v):
                raise ValidationError("thresholds must be finite")

    def sorted_cuts(self) -> tuple[float, float, float]:
        return tuple(sorted((self.low, self.medium, self.high)))


def _orientation(p, q, r) -> int:
    """Positive if p-q-r turn clockwise, negative if counter-clockwise, 0 if collinear."""
    return (q[1] - p[1]) * (r[0] - p[0]) - (q[0] - p[0]) * (r[1] - p[1])


def _hulls(points: list[tuple[int, int]]) -> tuple[list, list]:
    """Upper and lower convex hulls of a point set (Graham scan by x)."""
    pts = sorted(set(points))
    upper: list[tuple[int, int]] = []
    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(upper) > 1 and _orientation(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        while len(lower) > 1 and _orientation(lower[-2], lower[-1], p) >= 0:
            lower.pop()
        upper.append(p)
        lower.append(p)
    return upper, lower


def _antipodal_pairs(points: list[tuple[int, int]]):
    """Rotating calipers: yields the point pairs touched by parallel support lines."""
    upper, lower = _hulls(points)
    i = 0
    j = len(lower) - 1
    while i < len(upper) - 1 or j > 0:
        yield upper[i], lower[j]
        if i == len(upper) - 1:
            j -= 1
        elif j == 0:
            i += 1
        # compare slopes of the next hull edges, avoiding division
        elif (upper[i + 1][1] - upper[i][1]) * (lower[j][0] - lower[j - 1][0]) > \
                (lower[j][1] - lower[j - 1][1]) * (upper[i + 1][0] - upper[i][0]):
            i += 1
        else:
            j -= 1


def mask_pixel_length(mask: BitMask) -> float:
    """Queue extent of a mask: max distance between any two set-pixel centers."""
    if not mask.set_pixels:
        raise InsufficientDataError("empty mask has no pixel length")
    pts = list(mask.set_pixels)
    if len(pts) == 1:
        return 0.0
    best = max(
        (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 for p, q in _antipodal_pairs(pts)
    )
    return math.sqrt(best)


def minute_bin(timestamp_ms: int, bin_minutes: int = 1) -> int:
    """Time-of-day bin index for a UTC timestamp."""
    minute_of_day = (timestamp_ms % _MS_PER_DAY) // 60_000
    return int(minute_of_day) // bin_minutes


def sample_date(timestamp_ms: int) -> str:
    """UTC calendar date of a timestamp, as ISO yyyy-mm-dd."""
    return datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc).date().isoformat()


def compute_thresholds(
    history: Iterable[QueueSample],
    k: float = 1.0,
    min_history_days: int = 7,
    bin_minutes: int = 1,
) -> SeverityThresholds:
    """Derive (low, medium, high) cuts from per-minute quartile statistics.

    Per time-of-day bin, the quartiles Q1/Q2/Q3 of pixel length are taken across
    the whole history. The shared base is the largest per-bin mean of the three
    quartiles; each cut adds k times the across-bin spread of its own quartile
    series (population std).
    """
    samples = list(history)
    if not samples:
        raise InsufficientDataError("no queue samples")
    days = {sample_date(s.timestamp_ms) for s in samples}
    if len(days) < min_history_days:
        raise InsufficientDataError(
            f"history covers {len(days)} day(s); need at least {min_history_days}"
        )

    by_bin: dict[int, list[float]] = {}
    for s in samples:
        by_bin.setdefault(minute_bin(s.timestamp_ms, bin_minutes), []).append(s.pixel_length)

    q1s, q2s, q3s = [], [], []
    for b in sorted(by_bin):
        q1, q2, q3 = np.percentile(by_bin[b], [25.0, 50.0, 75.0])
        q1s.append(q1)
        q2s.append(q2)
        q3s.append(q3)

    means = [(a + b + c) / 3.0 for a, b, c in zip(q1s, q2s, q3s)]
    base = max(means)
    return SeverityThresholds(
        low=base + k * float(np.std(q1s)),
        medium=base + k * float(np.std(q2s)),
        high=base + k * float(np.std(q3s)),
        k=k,
    )


def classify_severity(length: float, thresholds: SeverityThresholds) -> str:
    """Bin a pixel length into low/medium/high against sorted cut points."""
    lo, mid, _ = thresholds.sorted_cuts()
    if length <= lo:
        return "low"
    if length <= mid:
        return "medium"
    return "high"


@dataclass(frozen=True)
class SeverityHeatmap:
    """Grid of severity levels: one row per date, one column per time-of-day bin."""

    camera_id: str
    dates: tuple[str, ...]
    bin_minutes: int
    cells: tuple[tuple[str | None, ...], ...]       # severity level or None (missing)
    mean_lengths: tuple[tuple[float | None, ...], ...]

    @property
    def n_bins(self) -> int:
        return 1440 // self.bin_minutes


def severity_heatmap(
    samples: Iterable[QueueSample],
    thresholds: SeverityThresholds,
    bin_minutes: int = 1,
    dates: Sequence[str] | None = None,
) -> SeverityHeatmap:
    """Severity of the mean pixel length per (date, time-of-day bin) cell."""
    if 1440 % bin_minutes != 0:
        raise ValidationError(f"bin_minutes {bin_minutes} must divide 1440")
    samples = list(samples)
    camera_id = samples[0].camera_id if samples else ""
    acc: dict[tuple[str, int], list[float]] = {}
    for s in samples:
        key = (sample_date(s.timestamp_ms), minute_bin(s.timestamp_ms, bin_minutes))
        acc.setdefault(key, []).append(s.pixel_length)

    if dates is None:
        dates = sorted({d for d, _ in acc})
    n_bins = 1440 // bin_minutes
    cells, means = [], []
    for d in dates:
        row_cells: list[str | None] = []
        row_means: list[float | None] = []
        for b in range(n_bins):
            vals = acc.get((d, b))
            if vals:
                m = sum(vals) / len(vals)
                row_means.append(m)
                row_cells.append(classify_severity(m, thresholds))
            else:
                row_means.append(None)
                row_cells.append(None)
        cells.append(tuple(row_cells))
        means.append(tuple(row_means))
    return SeverityHeatmap(
        camera_id=camera_id,
        dates=tuple(dates),
        bin_minutes=bin_minutes,
        cells=tuple(cells),
        mean_lengths=tuple(means),
    )


def heatmap_to_csv(hm: SeverityHeatmap) -> str:
    """CSV grid with L/M/H cells and '-' for missing."""
    headers = ["date"]
    for b in range(hm.n_bins):
        minute = b * hm.bin_minutes
        headers.append(f"{minute // 60:02d}:{minute % 60:02d}")
    lines = [",".join(headers)]
    for date, row in zip(hm.dates, hm.cells):
        lines.append(",".join([date] + [_SEVERITY_LETTER[c] for c in row]))
    return "\n".join(lines) + "\n"


def heatmap_to_json(hm: SeverityHeatmap) -> dict:
    """JSON variant carrying both severities and raw mean lengths."""
    return {
        "camera_id": hm.camera_id,
        "bin_minutes": hm.bin_minutes,
        "dates": list(hm.dates),
        "severity": [[c for c in row] for row in hm.cells],
        "mean_pixel_length": [[m for m in row] for row in hm.mean_lengths],
    }
