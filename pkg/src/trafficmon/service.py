"""Multi-camera orchestration and the HTTP/event-stream API.

One pipeline per camera: dedup -> tracker -> speed/direction -> anomaly and
counting, with queue samples classified against adaptive thresholds. Each
pipeline rolls its output into one record per minute, appended to day-split
JSONL files, so restarting the service and replaying the same log lands on
identical aggregates.

Timekeeping is logical: the clock is the maximum timestamp seen in the data,
never the wall clock, which keeps replays reproducible.
"""

from __future__ import annotations

import asyncio
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse

from .anomaly import AnomalyConfig, AnomalyEvent, StationaryVehicleDetector, suppress_and_merge
from .counting import CountTally, counting_step, dedup_detections
from .errors import DuplicateCameraError, UnknownCameraError, ValidationError
from .ingest import CameraRecord, FrameDetections
from .motion import (
    ROAD_FREEWAY,
    DirectionHistogram,
    SpeedSampler,
    classify_road_type,
    default_min_support,
    dominant_direction,
)
from .queues import (
    QueueSample,
    SeverityThresholds,
    classify_severity,
    compute_thresholds,
    sample_date,
)
from .tracking import FeatureTracker, FeatureTrackerConfig, IouTracker, IouTrackerConfig

SEVERITY_UNKNOWN = "unknown"

QUERY_KEYWORDS = ("congestion", "anomaly", "stalled", "rain", "snow")


@dataclass(frozen=True)
class PipelineConfig:
    tracker: str = "iou"  # iou | feature
    iou_tracker: IouTrackerConfig = IouTrackerConfig()
    feature_tracker: FeatureTrackerConfig = FeatureTrackerConfig()
    anomaly: AnomalyConfig = AnomalyConfig()
    dedup_iou: float = 0.5
    speed_window_ms: int = 2000
    min_displacement_px: float = 10.0
    direction_lookback_min: float = 15.0
    threshold_k: float = 1.0
    min_history_days: int = 7
    stale_after_s: float = 120.0
    aggregate_interval_s: int = 60

    def __post_init__(self) -> None:
        if self.tracker not in ("iou", "feature"):
            raise ValidationError("tracker must be 'iou' or 'feature'")
        if self.aggregate_interval_s <= 0 or self.stale_after_s <= 0:
            raise ValidationError("intervals must be positive")


class EventBus:
    """Fan-out with per-subscriber bounded queues; slow readers lose the
    oldest events instead of blocking the pipelines."""

    def __init__(self, capacity: int = 1000):
        self._subs: list[deque] = []
        self._lock = threading.Lock()
        self._capacity = capacity

    def subscribe(self) -> deque:
        q: deque = deque(maxlen=self._capacity)
        with self._lock:
            self._subs.append(q)
        return q

    def unsubscribe(self, q: deque) -> None:
        with self._lock:
            try:
                self._subs.remove(q)
            except ValueError:
                pass

    def publish(self, event: dict) -> None:
        with self._lock:
            for q in self._subs:
                q.append(event)  # maxlen drops the oldest on overflow


class Storage:
    """Append-only JSONL, one file per camera per UTC day."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, camera_id: str, ts_ms: int) -> Path:
        day = sample_date(ts_ms)
        cam_dir = self.root / camera_id
        cam_dir.mkdir(parents=True, exist_ok=True)
        return cam_dir / f"{day}.jsonl"

    def append(self, camera_id: str, record: dict) -> None:
        path = self._path(camera_id, record["minute_start_ts"])
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def read_range(self, camera_id: str, from_ts: int, to_ts: int) -> list[dict]:
        cam_dir = self.root / camera_id
        if not cam_dir.exists():
            return []
        records: list[dict] = []
        for path in sorted(cam_dir.glob("*.jsonl")):
            with path.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    if from_ts <= rec["minute_start_ts"] < to_ts:
                        records.append(rec)
        records.sort(key=lambda r: r["minute_start_ts"])
        return records


def _event_dict(ev: AnomalyEvent) -> dict:
    return {
        "cam": ev.camera_id,
        "track": ev.track_id,
        "location": list(ev.location),
        "direction": ev.direction,
        "start_ts_ms": ev.start_ts_ms,
        "end_ts_ms": ev.end_ts_ms,
        "status": ev.status,
        "rejection_reason": ev.rejection_reason,
    }


@dataclass
class _MinuteBucket:
    minute_start_ts: int
    counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    pl_values: list[float] = field(default_factory=list)
    anomaly_refs: list[str] = field(default_factory=list)


class CameraPipeline:
    """Everything one camera accumulates, fed frame by frame."""

    def __init__(self, camera: CameraRecord, config: PipelineConfig, bus: EventBus, storage: Storage | None):
        self.camera = camera
        self.config = config
        self.bus = bus
        self.storage = storage
        if config.tracker == "feature":
            self.tracker = FeatureTracker(config.feature_tracker)
        else:
            self.tracker = IouTracker(config.iou_tracker)
        self.speeds = SpeedSampler(config.speed_window_ms)
        road = camera.road_type_override or ROAD_FREEWAY
        self.anomaly = StationaryVehicleDetector(camera.camera_id, config.anomaly, road_type=road)
        self.tally = CountTally()
        self.last_update_ts: int | None = None
        self.queue_history: list[QueueSample] = []
        self.thresholds: SeverityThresholds | None = None
        self.current_severity: str = SEVERITY_UNKNOWN
        self._track_origin: dict[int, tuple[float, float]] = {}
        self._finished_dirs: deque = deque()  # (ts_ms, direction)
        self._hour_counts: deque = deque()  # (ts_ms, class_label)
        self._bucket: _MinuteBucket | None = None
        self._last_threshold_day: str | None = None

    # ---- status ----------------------------------------------------------

    def status(self, now_ms: int | None = None) -> dict:
        now = now_ms if now_ms is not None else self.last_update_ts
        per_class: dict[str, int] = {}
        if self.last_update_ts is not None:
            horizon = self.last_update_ts - 3_600_000
            for ts, cls in self._hour_counts:
                if ts >= horizon:
                    per_class[cls] = per_class.get(cls, 0) + 1
        stale = (
            self.last_update_ts is not None
            and now is not None
            and now - self.last_update_ts > self.config.stale_after_s * 1000
        )
        return {
            "camera_id": self.camera.camera_id,
            "name": self.camera.name,
            "last_update_ts": self.last_update_ts,
            "queue_severity": self.current_severity,
            "active_anomalies": len(self.anomaly.active_events()),
            "counts_last_hour": per_class,
            "weather_tag": self.camera.weather_tag,
            "road_type": self.anomaly.road_type,
            "stale": bool(stale),
        }

    # ---- frame path ------------------------------------------------------

    def process_frame(self, frame: FrameDetections) -> None:
        if frame.camera_id != self.camera.camera_id:
            raise ValidationError(
                f"frame for {frame.camera_id!r} fed to {self.camera.camera_id!r}"
            )
        self._advance_clock(frame.timestamp_ms)
        frame = dedup_detections(frame, self.config.dedup_iou)
        events = self.tracker.step(frame)
        self.anomaly.begin_frame(frame.timestamp_ms, frame.frame_digest)

        for tid, det in events.started:
            self._track_origin[tid] = det.center
            self.speeds.update(tid, det.timestamp_ms, det.center)

        for tid, _prev, det, _cls in events.extended:
            spd = self.speeds.update(tid, det.timestamp_ms, det.center)
            origin = self._track_origin.get(tid, det.center)
            direction = _quantize_direction(origin, det.center, self.config.min_displacement_px)
            change = self.anomaly.observe(tid, det.timestamp_ms, det.center, spd, direction)
            if change is not None and change.status == "confirmed":
                self.bus.publish(
                    {
                        "type": "anomaly_alert",
                        "camera_id": self.camera.camera_id,
                        "event": _event_dict(change),
                    }
                )
                if self._bucket is not None:
                    self._bucket.anomaly_refs.append(f"{change.track_id}:{change.start_ts_ms}")

        for track in events.finished_tracks:
            d = dominant_direction(track, self.config.min_displacement_px)
            if d is not None:
                self._finished_dirs.append((track.last.timestamp_ms, d))
        for tid in events.finished_ids:
            self.speeds.drop(tid)
            self.anomaly.track_finished(tid, frame.timestamp_ms)
            self._track_origin.pop(tid, None)

        crossings = counting_step(self.tally, events, self.camera.counting_lines)
        for ev in crossings:
            self._hour_counts.append((ev.timestamp_ms, ev.class_label))
            if self._bucket is not None:
                key = (ev.line_label, ev.class_label, ev.direction)
                self._bucket.counts[key] = self._bucket.counts.get(key, 0) + 1
            self.bus.publish(
                {
                    "type": "count_tick",
                    "camera_id": self.camera.camera_id,
                    "line": ev.line_label,
                    "cls": ev.class_label,
                    "dir": ev.direction,
                    "ts_ms": ev.timestamp_ms,
                    "total": self.tally.total(ev.line_label),
                }
            )

        self._update_road_type(frame.timestamp_ms)

    def add_queue_sample(self, sample: QueueSample) -> None:
        if sample.camera_id != self.camera.camera_id:
            raise ValidationError("queue sample for a different camera")
        self._advance_clock(sample.timestamp_ms)
        self.queue_history.append(sample)
        self._maybe_refresh_thresholds(sample.timestamp_ms)
        if self.thresholds is not None:
            self.current_severity = classify_severity(sample.pixel_length, self.thresholds)
        if self._bucket is not None:
            self._bucket.pl_values.append(sample.pixel_length)

    def finish(self) -> None:
        """Flush the tracker and the open minute bucket at stream end."""
        events = self.tracker.finish()
        for track in events.finished_tracks:
            d = dominant_direction(track, self.config.min_displacement_px)
            if d is not None:
                self._finished_dirs.append((track.last.timestamp_ms, d))
        for tid in events.finished_ids:
            self.speeds.drop(tid)
            if self.last_update_ts is not None:
                self.anomaly.track_finished(tid, self.last_update_ts)
            self._track_origin.pop(tid, None)
        self._flush_bucket()

    # ---- internals -------------------------------------------------------

    def _advance_clock(self, ts_ms: int) -> None:
        interval_ms = self.config.aggregate_interval_s * 1000
        minute = (ts_ms // interval_ms) * interval_ms
        if self._bucket is None:
            self._bucket = _MinuteBucket(minute_start_ts=minute)
        elif minute > self._bucket.minute_start_ts:
            self._flush_bucket()
            self._bucket = _MinuteBucket(minute_start_ts=minute)
        if self.last_update_ts is None or ts_ms > self.last_update_ts:
            self.last_update_ts = ts_ms

    def _flush_bucket(self) -> None:
        if self._bucket is None:
            return
        b = self._bucket
        mean_pl = sum(b.pl_values) / len(b.pl_values) if b.pl_values else None
        severity = (
            classify_severity(mean_pl, self.thresholds)
            if mean_pl is not None and self.thresholds is not None
            else None
        )
        record = {
            "type": "aggregate",
            "cam": self.camera.camera_id,
            "minute_start_ts": b.minute_start_ts,
            "mean_pl": mean_pl,
            "severity": severity,
            "counts": {f"{k[0]}|{k[1]}|{k[2]}": n for k, n in sorted(b.counts.items())},
            "anomaly_refs": list(b.anomaly_refs),
        }
        if self.storage is not None:
            self.storage.append(self.camera.camera_id, record)
        self.bus.publish(
            {
                "type": "status_delta",
                "camera_id": self.camera.camera_id,
                "status": self.status(),
                "aggregate": record,
            }
        )
        self._bucket = None

    def _update_road_type(self, now_ms: int) -> None:
        if self.camera.road_type_override is not None:
            return
        horizon = now_ms - int(self.config.direction_lookback_min * 60_000)
        while self._finished_dirs and self._finished_dirs[0][0] < horizon:
            self._finished_dirs.popleft()
        hist = DirectionHistogram()
        for _, d in self._finished_dirs:
            hist.add(d)
        if hist.total == 0:
            return
        self.anomaly.road_type = classify_road_type(
            hist, min_support=default_min_support(hist.total)
        )

    def _maybe_refresh_thresholds(self, ts_ms: int) -> None:
        day = sample_date(ts_ms)
        if day == self._last_threshold_day:
            return
        self._last_threshold_day = day
        try:
            self.thresholds = compute_thresholds(
                self.queue_history,
                k=self.config.threshold_k,
                min_history_days=self.config.min_history_days,
            )
        except Exception:
            pass  # not enough history yet; keep whatever we had

    def merged_anomalies(self) -> list[AnomalyEvent]:
        return suppress_and_merge(self.anomaly.events, self.config.anomaly)


def _quantize_direction(origin, center, min_displacement_px: float) -> str | None:
    dx = center[0] - origin[0]
    dy = center[1] - origin[1]
    if dx * dx + dy * dy < min_displacement_px * min_displacement_px:
        return None
    if abs(dx) >= abs(dy):
        return "E" if dx > 0 else "W"
    return "S" if dy > 0 else "N"


class TrafficService:
    """Registry of camera pipelines plus the query/read API they back."""

    def __init__(self, config: PipelineConfig | None = None, storage_root: str | Path | None = None):
        self.config = config or PipelineConfig()
        self.bus = EventBus()
        self.storage = Storage(storage_root) if storage_root is not None else None
        self.pipelines: dict[str, CameraPipeline] = {}

    # ---- camera management ----

    def register_camera(self, record: CameraRecord) -> CameraPipeline:
        if record.camera_id in self.pipelines:
            raise DuplicateCameraError(f"camera {record.camera_id!r} already registered")
        pipe = CameraPipeline(record, self.config, self.bus, self.storage)
        self.pipelines[record.camera_id] = pipe
        return pipe

    def pipeline(self, camera_id: str) -> CameraPipeline:
        pipe = self.pipelines.get(camera_id)
        if pipe is None:
            raise UnknownCameraError(f"no camera {camera_id!r}")
        return pipe

    @property
    def clock_ms(self) -> int | None:
        stamps = [p.last_update_ts for p in self.pipelines.values() if p.last_update_ts is not None]
        return max(stamps) if stamps else None

    # ---- feeding ----

    def feed(self, frame: FrameDetections) -> None:
        self.pipeline(frame.camera_id).process_frame(frame)

    def feed_queue_sample(self, sample: QueueSample) -> None:
        self.pipeline(sample.camera_id).add_queue_sample(sample)

    def feed_log(self, frames: Iterable[FrameDetections], finish: bool = True) -> None:
        touched: set[str] = set()
        for frame in frames:
            self.feed(frame)
            touched.add(frame.camera_id)
        if finish:
            for cam in touched:
                self.pipelines[cam].finish()

    # ---- reads ----

    def statuses(self) -> list[dict]:
        now = self.clock_ms
        return [p.status(now) for _, p in sorted(self.pipelines.items())]

    def camera_status(self, camera_id: str) -> dict:
        return self.pipeline(camera_id).status(self.clock_ms)

    def anomalies(self, active: bool | None = None) -> list[dict]:
        out = []
        for _, pipe in sorted(self.pipelines.items()):
            for ev in pipe.anomaly.events:
                if active is True and not ev.is_open:
                    continue
                if active is False and ev.is_open:
                    continue
                out.append(_event_dict(ev))
        out.sort(key=lambda e: (e["start_ts_ms"], e["cam"]))
        return out

    def history(self, camera_id: str, from_ts: int, to_ts: int, resolution: str = "minute") -> list[dict]:
        self.pipeline(camera_id)  # existence check
        if self.storage is None:
            return []
        records = self.storage.read_range(camera_id, from_ts, to_ts)
        if resolution == "minute":
            return records
        if resolution != "hour":
            raise ValidationError("resolution must be 'minute' or 'hour'")
        return _fold_hours(records)

    def heatmap(self, camera_id: str, days: int) -> dict:
        """Severity grid from stored aggregates: rows dates, cols minute bins."""
        pipe = self.pipeline(camera_id)
        if days < 1:
            raise ValidationError("days must be >= 1")
        now = pipe.last_update_ts
        if now is None or self.storage is None:
            return {"camera_id": camera_id, "dates": [], "bins_per_day": 1440, "cells": []}
        day_ms = 86_400_000
        start = ((now // day_ms) - (days - 1)) * day_ms
        records = self.storage.read_range(camera_id, start, now + 1)
        dates = sorted({sample_date(r["minute_start_ts"]) for r in records})
        index = {d: i for i, d in enumerate(dates)}
        cells: list[list[str | None]] = [[None] * 1440 for _ in dates]
        for r in records:
            d = sample_date(r["minute_start_ts"])
            minute = (r["minute_start_ts"] % day_ms) // 60_000
            if r.get("severity") is not None:
                cells[index[d]][minute] = r["severity"]
        return {"camera_id": camera_id, "dates": dates, "bins_per_day": 1440, "cells": cells}

    # ---- query ----

    def query(self, q: str) -> dict:
        words = [w for w in q.lower().split() if w]
        unknown = [w for w in words if w not in QUERY_KEYWORDS]
        if unknown:
            return {
                "cameras": [],
                "warning": f"unknown keywords: {', '.join(sorted(set(unknown)))}",
            }
        now = self.clock_ms
        matches = []
        for _, pipe in sorted(self.pipelines.items()):
            st = pipe.status(now)
            ok = True
            for w in words:
                if w == "congestion":
                    ok = st["queue_severity"] in ("medium", "high")
                elif w in ("anomaly", "stalled"):
                    ok = st["active_anomalies"] > 0
                elif w in ("rain", "snow"):
                    ok = st["weather_tag"] == w
                if not ok:
                    break
            if ok:
                matches.append(st)
        return {"cameras": matches}


def _fold_hours(records: list[dict]) -> list[dict]:
    hour_ms = 3_600_000
    folded: dict[int, dict] = {}
    for r in records:
        hour = (r["minute_start_ts"] // hour_ms) * hour_ms
        agg = folded.get(hour)
        if agg is None:
            agg = {
                "type": "aggregate",
                "cam": r["cam"],
                "minute_start_ts": hour,
                "resolution": "hour",
                "mean_pl": None,
                "severity": None,
                "counts": {},
                "anomaly_refs": [],
                "_pl": [],
            }
            folded[hour] = agg
        if r.get("mean_pl") is not None:
            agg["_pl"].append(r["mean_pl"])
        for key, n in r.get("counts", {}).items():
            agg["counts"][key] = agg["counts"].get(key, 0) + n
        agg["anomaly_refs"].extend(r.get("anomaly_refs", ()))
        sev = r.get("severity")
        if sev is not None:
            rank = {"low": 0, "medium": 1, "high": 2}
            if agg["severity"] is None or rank[sev] > rank[agg["severity"]]:
                agg["severity"] = sev
    out = []
    for hour in sorted(folded):
        agg = folded[hour]
        pls = agg.pop("_pl")
        agg["mean_pl"] = sum(pls) / len(pls) if pls else None
        out.append(agg)
    return out


def build_app(service: TrafficService):
    """FastAPI application over a TrafficService."""
    app = FastAPI(title="traffic monitor")

    @app.get("/cameras")
    def cameras() -> list[dict]:
        return service.statuses()

    @app.post("/cameras", status_code=201)
    def add_camera(body: dict) -> dict:
        from .ingest import camera_record_from_dict

        try:
            record = camera_record_from_dict(body)
            service.register_camera(record)
        except DuplicateCameraError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return service.camera_status(record.camera_id)

    @app.get("/cameras/{camera_id}/status")
    def camera_status(camera_id: str) -> dict:
        try:
            return service.camera_status(camera_id)
        except UnknownCameraError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/cameras/{camera_id}/history")
    def camera_history(
        camera_id: str,
        from_ts: int = Query(default=0, alias="from"),
        to_ts: int = Query(default=2**62, alias="to"),
        resolution: str = "minute",
    ) -> list[dict]:
        try:
            return service.history(camera_id, from_ts, to_ts, resolution)
        except UnknownCameraError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/cameras/{camera_id}/heatmap")
    def camera_heatmap(camera_id: str, days: int = 7) -> dict:
        try:
            return service.heatmap(camera_id, days)
        except UnknownCameraError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/anomalies")
    def anomalies(active: bool | None = None) -> list[dict]:
        return service.anomalies(active)

    @app.get("/query")
    def query(q: str = "") -> dict:
        return service.query(q)

    @app.get("/events")
    async def events(request: Request) -> StreamingResponse:
        sub = service.bus.subscribe()

        async def stream():
            idle_rounds = 0
            try:
                while True:
                    if await request.is_disconnected():
                        break
                    drained = False
                    while sub:
                        ev = sub.popleft()
                        payload = json.dumps(ev, separators=(",", ":"))
                        yield f"event: {ev['type']}\ndata: {payload}\n\n"
                        drained = True
                    if drained:
                        idle_rounds = 0
                    else:
                        idle_rounds += 1
                        if idle_rounds >= 300:  # ~15 s of silence
                            yield ": keepalive\n\n"
                            idle_rounds = 0
                    await asyncio.sleep(0.05)
            finally:
                service.bus.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
