"""Deterministic synthetic traffic for tests and demos.

Vehicles run at constant speed along lane polylines with simple car
following (a follower never closes within min_gap_px of its leader), so
injected stalls produce realistic upstream queues instead of overlapping
boxes. Stalled vehicles sway a fraction of a pixel per frame, the way a
real detection box on a stopped vehicle does, which keeps their speed small
but nonzero. Frozen windows re-emit the previous frame verbatim: identical
boxes and an identical frame digest.

Everything is a pure function of (config, seed): two runs serialize to the
same bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .anomaly import AnomalyEvent
from .core import VEHICLE_CLASSES, BoundingBox, Detection, Track
from .counting import CountingLine
from .errors import ValidationError
from .ingest import FrameDetections
from .queues import QueueSample

# box footprint per class, pixels (width, height)
CLASS_SIZES = {
    "pedestrian": (14.0, 28.0),
    "cyclist": (20.0, 36.0),
    "car": (44.0, 28.0),
    "bus": (90.0, 34.0),
    "truck": (80.0, 32.0),
}


@dataclass(frozen=True)
class NoiseConfig:
    center_jitter_sigma_px: float = 0.0
    dropout_prob: float = 0.0
    duplicate_prob: float = 0.0
    duplicate_iou_min: float = 0.7
    score_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout_prob < 1.0 and 0.0 <= self.duplicate_prob < 1.0):
            raise ValidationError("dropout_prob and duplicate_prob must be in [0, 1)")
        if not (0.0 < self.duplicate_iou_min <= 1.0):
            raise ValidationError("duplicate_iou_min must be in (0, 1]")
        if self.center_jitter_sigma_px < 0:
            raise ValidationError("center_jitter_sigma_px must be >= 0")
        if self.score_range is not None:
            lo, hi = self.score_range
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValidationError("score_range must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class LaneConfig:
    points: tuple[tuple[float, float], ...]
    direction: str
    speed_px_s: float = 80.0
    spawn_rates: dict[str, float] = field(default_factory=dict)
    min_gap_px: float = 100.0

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValidationError("lane polyline needs >= 2 points")
        if self.direction not in ("N", "S", "E", "W"):
            raise ValidationError(f"bad lane direction {self.direction!r}")
        if self.speed_px_s <= 0:
            raise ValidationError("speed_px_s must be positive")
        for cls, rate in self.spawn_rates.items():
            if cls not in VEHICLE_CLASSES:
                raise ValidationError(f"unknown class {cls!r} in spawn_rates")
            if rate < 0:
                raise ValidationError("spawn rates must be >= 0")
        if self.min_gap_px <= 0:
            raise ValidationError("min_gap_px must be positive")


@dataclass(frozen=True)
class StallSpec:
    lane: int
    start_s: float
    duration_s: float

    def __post_init__(self) -> None:
        if self.start_s < 0 or self.duration_s <= 0:
            raise ValidationError("stall start must be >= 0 and duration positive")


@dataclass(frozen=True)
class QueueProfile:
    """Pixel-length curve over the day: base everywhere, peaks override."""

    base_pl: float = 40.0
    peaks: tuple[tuple[int, int, float], ...] = ()  # (start_min, end_min, pl)
    period_s: float = 60.0
    emit_masks: bool = False

    def __post_init__(self) -> None:
        if self.base_pl < 0 or self.period_s <= 0:
            raise ValidationError("base_pl must be >= 0 and period_s positive")
        for start_min, end_min, pl in self.peaks:
            if not (0 <= start_min < end_min <= 1440) or pl < 0:
                raise ValidationError(f"bad peak ({start_min}, {end_min}, {pl})")

    def value_at(self, minute_of_day: int) -> float:
        for start_min, end_min, pl in self.peaks:
            if start_min <= minute_of_day < end_min:
                return pl
        return self.base_pl


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_s: float
    frame_rate_fps: float = 10.0
    image_size: tuple[float, float] = (1920.0, 1080.0)
    camera_id: str = "cam-1"
    start_ts_ms: int = 0
    lanes: tuple[LaneConfig, ...] = ()
    stalls: tuple[StallSpec, ...] = ()
    frozen_windows: tuple[tuple[float, float], ...] = ()  # (start_s, duration_s)
    counting_lines: tuple[CountingLine, ...] = ()
    queue_profile: QueueProfile | None = None
    noise: NoiseConfig = NoiseConfig()
    emit_embeddings: bool = False
    embedding_dim: int = 16
    emit_digests: bool = True
    stall_sway_px: float = 0.005

    def __post_init__(self) -> None:
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ValidationError("seed must fit in 64 bits")
        if self.duration_s <= 0 or self.frame_rate_fps <= 0:
            raise ValidationError("duration_s and frame_rate_fps must be positive")
        for stall in self.stalls:
            if stall.lane < 0 or stall.lane >= len(self.lanes):
                raise ValidationError(f"stall lane {stall.lane} out of range")
            if stall.start_s + stall.duration_s > self.duration_s:
                raise ValidationError("stall window extends past scenario end")
        for start_s, dur_s in self.frozen_windows:
            if start_s < 0 or dur_s <= 0 or start_s + dur_s > self.duration_s:
                raise ValidationError("frozen window outside scenario duration")
        if self.embedding_dim < 2:
            raise ValidationError("embedding_dim must be >= 2")
        if self.stall_sway_px < 0:
            raise ValidationError("stall_sway_px must be >= 0")


@dataclass
class GroundTruth:
    tracks: list[Track] = field(default_factory=list)
    counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    anomalies: list[AnomalyEvent] = field(default_factory=list)
    queue_samples: list[QueueSample] = field(default_factory=list)
    total_vehicles: int = 0


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON (the CLI's --config format).

    Keys mirror the dataclass fields; nested objects use the same field
    names, e.g. {"seed": 7, "duration_s": 60, "lanes": [{"points": [[0, 100],
    [1900, 100]], "direction": "E", "spawn_rates": {"car": 12}}]}.
    """
    if not isinstance(doc, dict):
        raise ValidationError("scenario config must be a JSON object")
    known = {
        "seed", "duration_s", "frame_rate_fps", "image_size", "camera_id",
        "start_ts_ms", "lanes", "stalls", "frozen_windows", "counting_lines",
        "queue_profile", "noise", "emit_embeddings", "embedding_dim",
        "emit_digests", "stall_sway_px",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    try:
        kwargs: dict = {k: doc[k] for k in ("seed", "duration_s") if k in doc}
        for k in ("frame_rate_fps", "camera_id", "start_ts_ms", "emit_embeddings",
                  "embedding_dim", "emit_digests", "stall_sway_px"):
            if k in doc:
                kwargs[k] = doc[k]
        if "image_size" in doc:
            kwargs["image_size"] = tuple(float(v) for v in doc["image_size"])
        kwargs["lanes"] = tuple(
            LaneConfig(
                points=tuple((float(x), float(y)) for x, y in ln["points"]),
                direction=ln["direction"],
                speed_px_s=float(ln.get("speed_px_s", 80.0)),
                spawn_rates=dict(ln.get("spawn_rates", {})),
                min_gap_px=float(ln.get("min_gap_px", 100.0)),
            )
            for ln in doc.get("lanes", ())
        )
        kwargs["stalls"] = tuple(
            StallSpec(lane=s["lane"], start_s=float(s["start_s"]), duration_s=float(s["duration_s"]))
            for s in doc.get("stalls", ())
        )
        kwargs["frozen_windows"] = tuple(
            (float(a), float(b)) for a, b in doc.get("frozen_windows", ())
        )
        kwargs["counting_lines"] = tuple(
            CountingLine(
                label=cl["label"],
                p1=tuple(float(v) for v in cl["p1"]),
                p2=tuple(float(v) for v in cl["p2"]),
                positive_dir=cl["positive_dir"],
            )
            for cl in doc.get("counting_lines", ())
        )
        if doc.get("queue_profile") is not None:
            qp = doc["queue_profile"]
            kwargs["queue_profile"] = QueueProfile(
                base_pl=float(qp.get("base_pl", 40.0)),
                peaks=tuple((int(a), int(b), float(pl)) for a, b, pl in qp.get("peaks", ())),
                period_s=float(qp.get("period_s", 60.0)),
                emit_masks=bool(qp.get("emit_masks", False)),
            )
        if doc.get("noise") is not None:
            nz = doc["noise"]
            sr = nz.get("score_range")
            kwargs["noise"] = NoiseConfig(
                center_jitter_sigma_px=float(nz.get("center_jitter_sigma_px", 0.0)),
                dropout_prob=float(nz.get("dropout_prob", 0.0)),
                duplicate_prob=float(nz.get("duplicate_prob", 0.0)),
                duplicate_iou_min=float(nz.get("duplicate_iou_min", 0.7)),
                score_range=tuple(float(v) for v in sr) if sr is not None else None,
            )
        return ScenarioConfig(**kwargs)
    except KeyError as exc:
        raise ValidationError(f"scenario config missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed scenario config: {exc}") from None


def frame_digest(detections: Iterable[Detection]) -> int:
    """64-bit content hash over the boxes a frame shows. Frame index and
    timestamps are deliberately excluded: a frozen video repeats content."""
    parts = []
    for d in detections:
        b = d.box
        parts.append(f"{d.class_label}:{b.x:.4f},{b.y:.4f},{b.w:.4f},{b.h:.4f},{d.score:.4f}")
    payload = "|".join(parts).encode("ascii")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


class _Lane:
    def __init__(self, cfg: LaneConfig):
        self.cfg = cfg
        self.cum = [0.0]
        for a, b in zip(cfg.points, cfg.points[1:]):
            self.cum.append(self.cum[-1] + math.dist(a, b))
        self.length = self.cum[-1]
        if self.length <= 0:
            raise ValidationError("lane polyline has zero length")

    def point_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.length)
        for i in range(len(self.cum) - 1):
            if s <= self.cum[i + 1] or i == len(self.cum) - 2:
                seg = self.cum[i + 1] - self.cum[i]
                t = 0.0 if seg == 0 else (s - self.cum[i]) / seg
                ax, ay = self.cfg.points[i]
                bx, by = self.cfg.points[i + 1]
                return (ax + (bx - ax) * t, ay + (by - ay) * t)
        return self.cfg.points[-1]


class _Vehicle:
    __slots__ = (
        "vid", "cls", "lane_idx", "pos", "score", "embedding", "size",
        "stall_start_ms", "stall_end_ms", "stalled_at",
    )

    def __init__(self, vid, cls, lane_idx, score, embedding):
        self.vid = vid
        self.cls = cls
        self.lane_idx = lane_idx
        self.pos = 0.0
        self.score = score
        self.embedding = embedding
        self.size = CLASS_SIZES[cls]
        self.stall_start_ms: int | None = None
        self.stall_end_ms: int | None = None
        self.stalled_at: float | None = None


def _spawn_schedule(cfg: ScenarioConfig, rng: np.random.Generator):
    """Pre-draw arrivals per lane: (time_s, lane, class, score, embedding)."""
    schedule = []
    for lane_idx, lane in enumerate(cfg.lanes):
        classes = [c for c in VEHICLE_CLASSES if lane.spawn_rates.get(c, 0.0) > 0]
        total = sum(lane.spawn_rates[c] for c in classes)
        if total <= 0:
            continue
        probs = np.array([lane.spawn_rates[c] / total for c in classes])
        t = 0.0
        while True:
            t += float(rng.exponential(60.0 / total))
            if t >= cfg.duration_s:
                break
            cls = classes[int(rng.choice(len(classes), p=probs))]
            score = float(rng.uniform(0.8, 0.95))
            emb = _unit_embedding(rng, cfg.embedding_dim) if cfg.emit_embeddings else None
            schedule.append((t, lane_idx, cls, score, emb))
    schedule.sort(key=lambda s: (s[0], s[1]))
    return schedule


def _unit_embedding(rng: np.random.Generator, dim: int) -> tuple[float, ...]:
    v = rng.normal(size=dim)
    v = v / np.linalg.norm(v)
    return tuple(float(x) for x in v)


def generate_scenario(cfg: ScenarioConfig) -> tuple[list[FrameDetections], GroundTruth]:
    """Produce the detection log and its exact ground truth."""
    rng = np.random.default_rng(cfg.seed)
    lanes = [_Lane(lc) for lc in cfg.lanes]
    truth = GroundTruth()

    if cfg.queue_profile is not None:
        _emit_queue_truth(cfg, truth)

    schedule = _spawn_schedule(cfg, rng)
    # dedicated stall vehicles, timed to reach mid-lane as the stall begins
    stall_vehicles: list[tuple[float, StallSpec]] = []
    for stall in cfg.stalls:
        lane = lanes[stall.lane]
        target = lane.length / 2.0
        speed = cfg.lanes[stall.lane].speed_px_s
        spawn_t = max(0.0, stall.start_s - target / speed)
        stall_vehicles.append((spawn_t, stall))

    has_traffic = bool(schedule) or bool(stall_vehicles)
    frames: list[FrameDetections] = []
    if not has_traffic:
        return frames, truth

    fps = cfg.frame_rate_fps
    dt = 1.0 / fps
    n_frames = int(round(cfg.duration_s * fps))
    active: dict[int, list[_Vehicle]] = {i: [] for i in range(len(lanes))}
    next_vid = 1
    sched_i = 0
    stall_i = 0
    stall_vehicles.sort(key=lambda s: s[0])
    track_dets: dict[int, list[Detection]] = {}
    prev_emitted: list[tuple[int, Detection]] | None = None
    prev_digest: int | None = None

    frozen = sorted((int(round(s * fps)), int(round((s + d) * fps))) for s, d in cfg.frozen_windows)

    def is_frozen(fi: int) -> bool:
        for a, b in frozen:
            if a <= fi < b:
                return True
        return False

    for fi in range(n_frames):
        t = fi * dt
        ts_ms = cfg.start_ts_ms + round(fi * 1000.0 / fps)

        # world always advances, even while the video is frozen
        for lane_idx, vehicles in active.items():
            speed = cfg.lanes[lane_idx].speed_px_s
            gap = cfg.lanes[lane_idx].min_gap_px
            leader_pos: float | None = None
            for v in vehicles:  # front of lane first
                stalled = (
                    v.stall_start_ms is not None
                    and v.stall_start_ms <= ts_ms < v.stall_end_ms
                )
                if stalled:
                    if v.stalled_at is None:
                        v.stalled_at = v.pos
                    new_pos = v.pos
                else:
                    new_pos = v.pos + speed * dt
                if leader_pos is not None:
                    new_pos = min(new_pos, leader_pos - gap)
                v.pos = new_pos
                leader_pos = new_pos
            active[lane_idx] = [v for v in vehicles if v.pos <= lanes[lane_idx].length]

        while sched_i < len(schedule) and schedule[sched_i][0] <= t:
            _, lane_idx, cls, score, emb = schedule[sched_i]
            sched_i += 1
            vehicles = active[lane_idx]
            if vehicles and vehicles[-1].pos < cfg.lanes[lane_idx].min_gap_px:
                continue  # entry blocked; arrival is dropped, not queued
            v = _Vehicle(next_vid, cls, lane_idx, score, emb)
            next_vid += 1
            vehicles.append(v)

        while stall_i < len(stall_vehicles) and stall_vehicles[stall_i][0] <= t:
            _, stall = stall_vehicles[stall_i]
            stall_i += 1
            emb = _unit_embedding(rng, cfg.embedding_dim) if cfg.emit_embeddings else None
            v = _Vehicle(next_vid, "car", stall.lane, 0.93, emb)
            next_vid += 1
            v.stall_start_ms = cfg.start_ts_ms + int(round(stall.start_s * 1000))
            v.stall_end_ms = cfg.start_ts_ms + int(round((stall.start_s + stall.duration_s) * 1000))
            vehicles = active[stall.lane]
            vehicles.append(v)
            vehicles.sort(key=lambda u: -u.pos)

        if is_frozen(fi) and prev_emitted is not None:
            emitted = [
                (vid, replace(det, frame_index=fi, timestamp_ms=ts_ms))
                for vid, det in prev_emitted
            ]
            digest = prev_digest
        else:
            emitted = []
            for lane_idx, vehicles in active.items():
                for v in vehicles:
                    if v.pos < 0:
                        continue
                    cx, cy = lanes[lane_idx].point_at(v.pos)
                    stalled_now = (
                        v.stall_start_ms is not None
                        and v.stall_start_ms <= ts_ms < v.stall_end_ms
                    )
                    if stalled_now and cfg.stall_sway_px > 0:
                        cx += cfg.stall_sway_px if fi % 2 else -cfg.stall_sway_px
                    w, h = v.size
                    det = Detection(
                        frame_index=fi,
                        timestamp_ms=ts_ms,
                        class_label=v.cls,
                        box=BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h),
                        score=v.score,
                        embedding=v.embedding,
                    )
                    emitted.append((v.vid, det))
            digest = frame_digest(d for _, d in emitted) if cfg.emit_digests else None

        if emitted:
            frames.append(
                FrameDetections(
                    camera_id=cfg.camera_id,
                    frame_index=fi,
                    timestamp_ms=ts_ms,
                    detections=tuple(d for _, d in emitted),
                    frame_digest=digest,
                )
            )
            for vid, det in emitted:
                track_dets.setdefault(vid, []).append(det)
        prev_emitted = emitted
        prev_digest = digest

    truth.total_vehicles = next_vid - 1
    for vid in sorted(track_dets):
        truth.tracks.append(
            Track(track_id=vid, detections=tuple(track_dets[vid]), state="finished")
        )

    _count_truth(cfg, truth)
    _stall_truth(cfg, truth)
    return frames, truth


def _count_truth(cfg: ScenarioConfig, truth: GroundTruth) -> None:
    for track in truth.tracks:
        cls = track.class_label
        centers = [d.center for d in track.detections]
        for line in cfg.counting_lines:
            for a, b in zip(centers, centers[1:]):
                if a == b:
                    continue
                direction = line.crossing_direction(a, b)
                if direction is not None:
                    key = (line.label, cls, direction)
                    truth.counts[key] = truth.counts.get(key, 0) + 1
                    break  # once per track per line


def _stall_truth(cfg: ScenarioConfig, truth: GroundTruth) -> None:
    for stall in cfg.stalls:
        start_ms = cfg.start_ts_ms + int(round(stall.start_s * 1000))
        end_ms = cfg.start_ts_ms + int(round((stall.start_s + stall.duration_s) * 1000))
        lane_dir = cfg.lanes[stall.lane].direction
        # the stalled vehicle is the track whose boxes stay put over the window
        best = None
        for track in truth.tracks:
            during = [
                d for d in track.detections if start_ms <= d.timestamp_ms < end_ms
            ]
            if len(during) < 2:
                continue
            dx = abs(during[-1].center[0] - during[0].center[0])
            dy = abs(during[-1].center[1] - during[0].center[1])
            if dx <= 1.0 and dy <= 1.0:
                best = (track, during[0].center)
                break
        if best is None:
            continue
        track, location = best
        truth.anomalies.append(
            AnomalyEvent(
                camera_id=cfg.camera_id,
                track_id=track.track_id,
                location=location,
                direction=lane_dir,
                start_ts_ms=start_ms,
                end_ts_ms=end_ms,
                status="confirmed",
            )
        )


def _emit_queue_truth(cfg: ScenarioConfig, truth: GroundTruth) -> None:
    profile = cfg.queue_profile
    assert profile is not None
    n = int(cfg.duration_s / profile.period_s)
    for i in range(n):
        ts_ms = cfg.start_ts_ms + int(round(i * profile.period_s * 1000))
        minute = (ts_ms // 60_000) % 1440
        pl = profile.value_at(int(minute))
        truth.queue_samples.append(
            QueueSample(camera_id=cfg.camera_id, timestamp_ms=ts_ms, pixel_length=pl)
        )


def render_queue_log(samples: Iterable[QueueSample], as_masks: bool = False) -> str:
    """Queue samples as ingest's queue-line format; as_masks swaps the plain
    pl for a 1-px-tall run whose extent measures back to exactly pl."""
    out = []
    for s in samples:
        if as_masks:
            length = int(round(s.pixel_length))
            if abs(length - s.pixel_length) > 1e-9:
                raise ValidationError("mask emission needs integral pixel lengths")
            rec = {
                "cam": s.camera_id,
                "ts_ms": s.timestamp_ms,
                "mask": {"rle": [[0, 0, length + 1]]},
            }
        else:
            rec = {"cam": s.camera_id, "ts_ms": s.timestamp_ms, "pl": s.pixel_length}
        out.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(out) + ("\n" if out else "")


def inject_noise(
    frames: Iterable[FrameDetections], noise: NoiseConfig, seed: int
) -> list[FrameDetections]:
    """Detector-style corruption: dropouts, center jitter, duplicate boxes.

    Frozen frames (digest equal to the previous frame's) replicate the
    previous frame's noised output so the frozen-video invariant survives
    noise injection. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    out: list[FrameDetections] = []
    prev_in_digest: int | None = None
    prev_out_dets: tuple[Detection, ...] = ()
    for fr in frames:
        if (
            fr.frame_digest is not None
            and prev_in_digest is not None
            and fr.frame_digest == prev_in_digest
        ):
            dets = tuple(
                replace(d, frame_index=fr.frame_index, timestamp_ms=fr.timestamp_ms)
                for d in prev_out_dets
            )
        else:
            dets_list: list[Detection] = []
            for d in fr.detections:
                if noise.dropout_prob > 0 and rng.random() < noise.dropout_prob:
                    continue
                nd = d
                if noise.center_jitter_sigma_px > 0:
                    dx = float(rng.normal(0.0, noise.center_jitter_sigma_px))
                    dy = float(rng.normal(0.0, noise.center_jitter_sigma_px))
                    b = nd.box
                    nd = replace(nd, box=BoundingBox(b.x + dx, b.y + dy, b.w, b.h))
                if noise.score_range is not None:
                    lo, hi = noise.score_range
                    nd = replace(nd, score=float(rng.uniform(lo, hi)))
                dets_list.append(nd)
                if noise.duplicate_prob > 0 and rng.random() < noise.duplicate_prob:
                    dets_list.append(_make_duplicate(nd, noise, rng))
            dets = tuple(dets_list)
        out.append(
            FrameDetections(
                camera_id=fr.camera_id,
                frame_index=fr.frame_index,
                timestamp_ms=fr.timestamp_ms,
                detections=dets,
                frame_digest=fr.frame_digest,
                masks=dict(fr.masks),
            )
        )
        prev_in_digest = fr.frame_digest
        prev_out_dets = dets
    return out


def _make_duplicate(d: Detection, noise: NoiseConfig, rng: np.random.Generator) -> Detection:
    # same-size boxes offset by (alpha*w, alpha*h) have IOU (1-a)^2/(2-(1-a)^2);
    # solving for the configured floor gives the largest safe offset
    m = noise.duplicate_iou_min
    alpha_max = 1.0 - math.sqrt(2.0 * m / (1.0 + m))
    alpha = float(rng.uniform(0.0, alpha_max * 0.98))
    sx = 1.0 if rng.random() < 0.5 else -1.0
    sy = 1.0 if rng.random() < 0.5 else -1.0
    b = d.box
    dup_box = BoundingBox(b.x + sx * alpha * b.w, b.y + sy * alpha * b.h, b.w, b.h)
    dup_score = max(0.05, d.score * (1.0 - float(rng.uniform(0.02, 0.1))))
    return replace(d, box=dup_box, score=dup_score)


def write_ground_truth(truth: GroundTruth) -> str:
    """Line-oriented ground-truth export (tracks, counts, stalls, queue PL)."""
    out = [
        json.dumps(
            {"type": "meta", "vehicles": truth.total_vehicles},
            separators=(",", ":"),
        )
    ]
    for t in truth.tracks:
        for d in t.detections:
            out.append(
                json.dumps(
                    {
                        "type": "track",
                        "track": t.track_id,
                        "frame": d.frame_index,
                        "ts_ms": d.timestamp_ms,
                        "cls": d.class_label,
                        "box": [d.box.x, d.box.y, d.box.w, d.box.h],
                        "score": d.score,
                    },
                    separators=(",", ":"),
                )
            )
    for (line, cls, direction), n in sorted(truth.counts.items()):
        out.append(
            json.dumps(
                {"type": "count", "line": line, "cls": cls, "dir": direction, "n": n},
                separators=(",", ":"),
            )
        )
    for ev in truth.anomalies:
        out.append(
            json.dumps(
                {
                    "type": "anomaly",
                    "cam": ev.camera_id,
                    "track": ev.track_id,
                    "location": list(ev.location),
                    "direction": ev.direction,
                    "start_ts_ms": ev.start_ts_ms,
                    "end_ts_ms": ev.end_ts_ms,
                    "status": ev.status,
                },
                separators=(",", ":"),
            )
        )
    for s in truth.queue_samples:
        out.append(
            json.dumps(
                {"type": "queue", "cam": s.camera_id, "ts_ms": s.timestamp_ms, "pl": s.pixel_length},
                separators=(",", ":"),
            )
        )
    return "\n".join(out) + "\n"


def read_ground_truth(text: str) -> GroundTruth:
    """Inverse of write_ground_truth (track embeddings are not round-tripped)."""
    truth = GroundTruth()
    dets: dict[int, list[Detection]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.get("type")
        if kind == "meta":
            truth.total_vehicles = rec["vehicles"]
        elif kind == "track":
            dets.setdefault(rec["track"], []).append(
                Detection(
                    frame_index=rec["frame"],
                    timestamp_ms=rec["ts_ms"],
                    class_label=rec["cls"],
                    box=BoundingBox(*rec["box"]),
                    score=rec["score"],
                )
            )
        elif kind == "count":
            truth.counts[(rec["line"], rec["cls"], rec["dir"])] = rec["n"]
        elif kind == "anomaly":
            truth.anomalies.append(
                AnomalyEvent(
                    camera_id=rec["cam"],
                    track_id=rec["track"],
                    location=tuple(rec["location"]),
                    direction=rec.get("direction"),
                    start_ts_ms=rec["start_ts_ms"],
                    end_ts_ms=rec.get("end_ts_ms"),
                    status=rec["status"],
                )
            )
        elif kind == "queue":
            truth.queue_samples.append(
                QueueSample(
                    camera_id=rec["cam"], timestamp_ms=rec["ts_ms"], pixel_length=rec["pl"]
                )
            )
        else:
            raise ValidationError(f"unknown ground-truth record type {kind!r}")
    for vid in sorted(dets):
        rows = sorted(dets[vid], key=lambda d: d.frame_index)
        truth.tracks.append(Track(track_id=vid, detections=tuple(rows), state="finished"))
    return truth
