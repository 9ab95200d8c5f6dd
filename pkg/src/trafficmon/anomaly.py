"""Stationary-vehicle anomaly detection.

A vehicle whose windowed speed stays under a threshold long enough becomes a
candidate; candidates confirm against road-type time limits, and a
post-processing pass drops frozen-video artifacts, merges co-located events,
and keeps one event per road side per time window.

Event lifecycle: candidate -> confirmed | rejected. The candidate's start is
backdated to the beginning of the slow streak, not the moment the window
filled, so reported starts track the physical stop closely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

from .errors import ValidationError
from .motion import ROAD_FREEWAY, ROAD_INTERSECTION

STATUSES = ("candidate", "confirmed", "rejected")
REJECTION_REASONS = ("frozen_frame", "intersection", "merged", "zero_speed")
INTERSECTION_POLICIES = ("reject", "confirm_60s")


@dataclass(frozen=True, slots=True)
class AnomalyConfig:
    candidate_speed_px_s: float = 0.5
    candidate_window_s: float = 15.0
    confirm_freeway_s: float = 30.0
    confirm_intersection_s: float = 60.0
    intersection_policy: str = "reject"
    merge_radius_px: float = 50.0
    one_per_side_window_min: float = 15.0

    def __post_init__(self) -> None:
        if self.candidate_speed_px_s <= 0:
            raise ValidationError("candidate_speed_px_s must be positive")
        if not (
            0 < self.candidate_window_s <= self.confirm_freeway_s <= self.confirm_intersection_s
        ):
            raise ValidationError(
                "need 0 < candidate_window_s <= confirm_freeway_s <= confirm_intersection_s"
            )
        if self.intersection_policy not in INTERSECTION_POLICIES:
            raise ValidationError(
                f"intersection_policy must be one of {INTERSECTION_POLICIES}"
            )
        if self.merge_radius_px < 0:
            raise ValidationError("merge_radius_px must be >= 0")
        if self.one_per_side_window_min <= 0:
            raise ValidationError("one_per_side_window_min must be positive")


@dataclass(frozen=True, slots=True)
class AnomalyEvent:
    camera_id: str
    track_id: int
    location: tuple[float, float]
    direction: str | None
    start_ts_ms: int
    end_ts_ms: int | None
    status: str
    rejection_reason: str | None = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValidationError(f"status must be one of {STATUSES}")
        if self.rejection_reason is not None and self.rejection_reason not in REJECTION_REASONS:
            raise ValidationError(f"rejection_reason must be one of {REJECTION_REASONS}")
        if (self.status == "rejected") != (self.rejection_reason is not None):
            raise ValidationError("rejected events (and only those) carry a reason")
        if self.end_ts_ms is not None and self.end_ts_ms < self.start_ts_ms:
            raise ValidationError("end_ts_ms must be >= start_ts_ms")
        if self.direction is not None and self.direction not in ("N", "S", "E", "W"):
            raise ValidationError(f"bad direction {self.direction!r}")

    @property
    def is_open(self) -> bool:
        return self.end_ts_ms is None

    def duration_ms(self, now_ms: int | None = None) -> int:
        end = self.end_ts_ms if self.end_ts_ms is not None else now_ms
        if end is None:
            raise ValidationError("open event needs now_ms to compute duration")
        return end - self.start_ts_ms


def event_to_json(event: AnomalyEvent) -> str:
    return json.dumps(
        {
            "cam": event.camera_id,
            "track": event.track_id,
            "location": list(event.location),
            "direction": event.direction,
            "start_ts_ms": event.start_ts_ms,
            "end_ts_ms": event.end_ts_ms,
            "status": event.status,
            "rejection_reason": event.rejection_reason,
        },
        separators=(",", ":"),
    )


def event_from_json(line: str) -> AnomalyEvent:
    rec = json.loads(line)
    return AnomalyEvent(
        camera_id=rec["cam"],
        track_id=rec["track"],
        location=tuple(rec["location"]),
        direction=rec.get("direction"),
        start_ts_ms=rec["start_ts_ms"],
        end_ts_ms=rec.get("end_ts_ms"),
        status=rec["status"],
        rejection_reason=rec.get("rejection_reason"),
    )


def confirm(
    candidate: AnomalyEvent,
    road_type: str,
    config: AnomalyConfig,
    now_ms: int | None = None,
) -> AnomalyEvent:
    """Apply the road-type confirmation rule to a candidate.

    Freeway: confirmed once stationary longer than confirm_freeway_s.
    Intersection: rejected outright under the `reject` policy, confirmed
    after confirm_intersection_s under `confirm_60s`. Returns the candidate
    unchanged when no rule fires yet.
    """
    if candidate.status != "candidate":
        raise ValidationError(f"cannot confirm a {candidate.status} event")
    if road_type == ROAD_INTERSECTION:
        if config.intersection_policy == "reject":
            end = now_ms if candidate.end_ts_ms is None else candidate.end_ts_ms
            return replace(
                candidate,
                status="rejected",
                rejection_reason="intersection",
                end_ts_ms=end if end is not None else candidate.start_ts_ms,
            )
        threshold_ms = config.confirm_intersection_s * 1000.0
    elif road_type == ROAD_FREEWAY:
        threshold_ms = config.confirm_freeway_s * 1000.0
    else:
        raise ValidationError(f"unknown road type {road_type!r}")
    if candidate.duration_ms(now_ms) > threshold_ms:
        return replace(candidate, status="confirmed")
    return candidate


class _TrackState:
    __slots__ = (
        "streak_start_ts",
        "all_zero",
        "event_index",
        "suppressed_until_rise",
        "last_ts",
        "last_center",
        "direction",
    )

    def __init__(self):
        self.streak_start_ts: int | None = None
        self.all_zero = True
        self.event_index: int | None = None
        self.suppressed_until_rise = False
        self.last_ts = 0
        self.last_center = (0.0, 0.0)
        self.direction: str | None = None


class StationaryVehicleDetector:
    """Per-camera anomaly state machine.

    Drive it per frame: begin_frame(ts, digest) once, then observe(...) for
    every tracked vehicle, then track_finished(...) for tracks that ended.
    Speeds are expected from a trailing-window estimator sampled at >= 1 Hz.

    Frozen video is recognized by an unchanged frame digest across the whole
    slow streak combined with exactly-zero speeds; such candidates are
    rejected as frozen_frame. On digest-less streams an all-zero streak is
    rejected as zero_speed instead (a real stalled box always sways a little,
    so exact zeros without video evidence are treated as detector artifacts).
    """

    def __init__(
        self,
        camera_id: str,
        config: AnomalyConfig | None = None,
        road_type: str = ROAD_FREEWAY,
    ):
        if road_type not in (ROAD_FREEWAY, ROAD_INTERSECTION):
            raise ValidationError(f"unknown road type {road_type!r}")
        self.camera_id = camera_id
        self.config = config or AnomalyConfig()
        self.road_type = road_type
        self.events: list[AnomalyEvent] = []
        self._tracks: dict[int, _TrackState] = {}
        # camera digest history: when it last changed and for how many frames
        # it has been identical
        self._last_digest: int | None = None
        self._digest_change_ts: int = 0
        self._digest_same_frames: int = 0
        self._digests_seen = False
        self._frame_ts: int = 0

    def begin_frame(self, ts_ms: int, frame_digest: int | None = None) -> None:
        self._frame_ts = ts_ms
        if frame_digest is None:
            return
        self._digests_seen = True
        if self._last_digest is None or frame_digest != self._last_digest:
            self._last_digest = frame_digest
            self._digest_change_ts = ts_ms
            self._digest_same_frames = 1
        else:
            self._digest_same_frames += 1

    def _frozen_streak(self, st: _TrackState) -> bool:
        return (
            self._digests_seen
            and self._digest_same_frames >= 2
            and st.streak_start_ts is not None
            and self._digest_change_ts <= st.streak_start_ts
        )

    def _update_event(self, index: int, event: AnomalyEvent) -> AnomalyEvent:
        self.events[index] = event
        return event

    def observe(
        self,
        track_id: int,
        ts_ms: int,
        center: tuple[float, float],
        speed: float | None,
        direction: str | None = None,
    ) -> AnomalyEvent | None:
        """Feed one speed sample; returns the event on any status change."""
        st = self._tracks.get(track_id)
        if st is None:
            st = _TrackState()
            self._tracks[track_id] = st
        st.last_ts = ts_ms
        st.last_center = center
        if direction is not None:
            st.direction = direction
        if speed is None:
            return None
        cfg = self.config

        if speed >= cfg.candidate_speed_px_s:
            changed = None
            if st.event_index is not None:
                ev = self.events[st.event_index]
                if ev.is_open:
                    changed = self._update_event(st.event_index, replace(ev, end_ts_ms=ts_ms))
                st.event_index = None
            st.streak_start_ts = None
            st.all_zero = True
            st.suppressed_until_rise = False
            return changed

        if st.streak_start_ts is None:
            st.streak_start_ts = ts_ms
            st.all_zero = True
        if speed != 0.0:
            st.all_zero = False

        if st.suppressed_until_rise or ts_ms - st.streak_start_ts < cfg.candidate_window_s * 1000.0:
            return None

        opened: AnomalyEvent | None = None
        if st.event_index is None:
            reason = None
            if st.all_zero:
                if self._frozen_streak(st):
                    reason = "frozen_frame"
                elif not self._digests_seen:
                    reason = "zero_speed"
            if reason is not None:
                event = AnomalyEvent(
                    camera_id=self.camera_id,
                    track_id=track_id,
                    location=center,
                    direction=st.direction,
                    start_ts_ms=st.streak_start_ts,
                    end_ts_ms=ts_ms,
                    status="rejected",
                    rejection_reason=reason,
                )
                self.events.append(event)
                st.suppressed_until_rise = True
                st.streak_start_ts = None
                st.all_zero = True
                return event
            opened = AnomalyEvent(
                camera_id=self.camera_id,
                track_id=track_id,
                location=center,
                direction=st.direction,
                start_ts_ms=st.streak_start_ts,
                end_ts_ms=None,
                status="candidate",
            )
            self.events.append(opened)
            st.event_index = len(self.events) - 1
            # fall through: long stalls may confirm on the same sample

        ev = self.events[st.event_index]
        if ev.status == "candidate":
            decided = confirm(ev, self.road_type, cfg, now_ms=ts_ms)
            if decided is not ev:
                self._update_event(st.event_index, decided)
                if decided.status == "rejected":
                    st.event_index = None
                    st.suppressed_until_rise = True
                    st.streak_start_ts = None
                return decided
        return opened

    def track_finished(self, track_id: int, ts_ms: int | None = None) -> AnomalyEvent | None:
        """Close any open event of a finished track and drop its state."""
        st = self._tracks.pop(track_id, None)
        if st is None or st.event_index is None:
            return None
        ev = self.events[st.event_index]
        if not ev.is_open:
            return None
        end = ts_ms if ts_ms is not None else st.last_ts
        return self._update_event(st.event_index, replace(ev, end_ts_ms=max(end, ev.start_ts_ms)))

    def active_events(self) -> tuple[AnomalyEvent, ...]:
        return tuple(ev for ev in self.events if ev.is_open)

    def confirmed_events(self) -> tuple[AnomalyEvent, ...]:
        return tuple(ev for ev in self.events if ev.status == "confirmed")


def update_candidates(
    samples: Iterable[tuple[int, float]],
    config: AnomalyConfig | None = None,
    digests: Iterable[int | None] | None = None,
    camera_id: str = "cam",
    track_id: int = 1,
    center: tuple[float, float] = (0.0, 0.0),
    road_type: str = ROAD_FREEWAY,
) -> list[AnomalyEvent]:
    """Run one track's (ts_ms, speed) series through a fresh detector.

    Convenience wrapper over StationaryVehicleDetector for batch analysis;
    digests, when given, pair 1:1 with samples. Events still running at the
    last sample are returned open.
    """
    det = StationaryVehicleDetector(camera_id, config, road_type=road_type)
    digest_iter: Iterator[int | None] | None = iter(digests) if digests is not None else None
    for ts_ms, speed in samples:
        digest = next(digest_iter) if digest_iter is not None else None
        det.begin_frame(ts_ms, digest)
        det.observe(track_id, ts_ms, center, speed)
    return det.events


def _clusters(events: list[AnomalyEvent], radius: float) -> list[list[int]]:
    """Single-linkage clusters over event locations."""
    n = len(events)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        xi, yi = events[i].location
        for j in range(i + 1, n):
            xj, yj = events[j].location
            if math.dist((xi, yi), (xj, yj)) <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def suppress_and_merge(
    events: Iterable[AnomalyEvent], config: AnomalyConfig | None = None
) -> list[AnomalyEvent]:
    """Post-process one camera's events.

    1. Drop frozen-video and zero-speed rejections.
    2. Merge events within merge_radius_px of each other (single linkage),
       keeping the earliest-starting event of each cluster untouched.
    3. Per (direction, one_per_side_window_min window), keep only the
       earliest survivor.

    Idempotent; never invents events.
    """
    cfg = config or AnomalyConfig()
    kept = [
        ev
        for ev in events
        if ev.rejection_reason not in ("frozen_frame", "zero_speed")
    ]
    kept.sort(key=lambda e: (e.start_ts_ms, e.track_id))

    merged: list[AnomalyEvent] = []
    for group in _clusters(kept, cfg.merge_radius_px):
        rep = min(group, key=lambda i: (kept[i].start_ts_ms, kept[i].track_id))
        merged.append(kept[rep])

    window_ms = int(cfg.one_per_side_window_min * 60_000)
    by_side: dict[tuple[str | None, int], AnomalyEvent] = {}
    for ev in merged:
        key = (ev.direction, ev.start_ts_ms // window_ms)
        cur = by_side.get(key)
        if cur is None or (ev.start_ts_ms, ev.track_id) < (cur.start_ts_ms, cur.track_id):
            by_side[key] = ev
    out = sorted(by_side.values(), key=lambda e: (e.start_ts_ms, e.track_id))
    return out
