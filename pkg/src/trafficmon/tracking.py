"""Detection-to-track association.

Two trackers share one stepping interface:

* IouTracker: pure spatial-overlap matching, no re-identification. A track
  that misses a single frame is finished on the spot; a detection missing
  for one frame therefore splits the object into two tracks.
* FeatureTracker: appearance matching on precomputed embeddings with an IOU
  sanity gate. Unmatched tracks age for a configurable number of frames
  before finishing, which is what carries identities across occlusion.

Both are single-writer per camera stream and fully deterministic: ties fall
back to detection input order and ascending track id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .core import VEHICLE_CLASSES, Detection, Track, cosine_distance
from .errors import InvalidInputError, SequencingError, ValidationError
from .ingest import FrameDetections


@dataclass(frozen=True, slots=True)
class IouTrackerConfig:
    sigma_iou: float = 0.5
    sigma_l: float = 0.3
    sigma_h: float = 0.5
    t_min: int = 2

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma_iou <= 1.0):
            raise ValidationError(f"sigma_iou must be in (0, 1], got {self.sigma_iou}")
        if not (0.0 <= self.sigma_l <= 1.0 and 0.0 <= self.sigma_h <= 1.0):
            raise ValidationError("sigma_l and sigma_h must be in [0, 1]")
        if self.sigma_l > self.sigma_h:
            raise ValidationError("sigma_l must be <= sigma_h")
        if self.t_min < 1:
            raise ValidationError(f"t_min must be >= 1, got {self.t_min}")


@dataclass(frozen=True, slots=True)
class FeatureTrackerConfig:
    max_cosine_distance: float = 0.3
    iou_gate: float = 0.1
    max_age_frames: int = 30

    def __post_init__(self) -> None:
        if not (0.0 < self.max_cosine_distance <= 2.0):
            raise ValidationError("max_cosine_distance must be in (0, 2]")
        if not (0.0 <= self.iou_gate <= 1.0):
            raise ValidationError("iou_gate must be in [0, 1]")
        if self.max_age_frames < 1:
            raise ValidationError("max_age_frames must be >= 1")


@dataclass(frozen=True, slots=True)
class TrackEvents:
    """What one tracker step changed.

    extended carries (track_id, previous detection, new detection, majority
    class so far) so counting can test the segment between consecutive
    centers and attribute it to the track's class. finished_ids lists every
    track that left the active set this step, including ones the quality
    filter discarded; finished_tracks holds only the kept ones.
    """

    frame_index: int
    started: tuple[tuple[int, Detection], ...]
    extended: tuple[tuple[int, Detection, Detection, str], ...]
    finished_tracks: tuple[Track, ...]
    finished_ids: tuple[int, ...]


class _LiveTrack:
    __slots__ = (
        "track_id", "detections", "max_score", "last_score", "box", "misses", "cls_counts",
    )

    def __init__(self, track_id: int, det: Detection):
        self.track_id = track_id
        self.detections = [det]
        self.max_score = det.score
        self.last_score = det.score
        b = det.box
        self.box = (b.x, b.y, b.x + b.w, b.y + b.h, b.w * b.h)
        self.misses = 0
        self.cls_counts = {det.class_label: 1}

    def extend(self, det: Detection) -> None:
        self.detections.append(det)
        if det.score > self.max_score:
            self.max_score = det.score
        self.last_score = det.score
        b = det.box
        self.box = (b.x, b.y, b.x + b.w, b.y + b.h, b.w * b.h)
        self.misses = 0
        c = det.class_label
        self.cls_counts[c] = self.cls_counts.get(c, 0) + 1

    def majority_class(self) -> str:
        # same tie rule as Track.class_label: first in class order wins
        counts = self.cls_counts
        return max(VEHICLE_CLASSES, key=lambda c: counts.get(c, 0))

    def to_track(self, state: str = "finished") -> Track:
        return Track(
            track_id=self.track_id, detections=tuple(self.detections), state=state
        )


class _BaseTracker:
    """State common to both trackers: active set, finished list, id counter."""

    def __init__(self):
        self._active: list[_LiveTrack] = []
        self._finished: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None
        self._camera_id: str | None = None

    @property
    def active_tracks(self) -> tuple[Track, ...]:
        return tuple(t.to_track(state="active") for t in self._active)

    @property
    def finished_tracks(self) -> tuple[Track, ...]:
        return tuple(self._finished)

    @property
    def next_id(self) -> int:
        return self._next_id

    def _check_frame(self, frame: FrameDetections) -> None:
        if self._camera_id is None:
            self._camera_id = frame.camera_id
        elif frame.camera_id != self._camera_id:
            raise SequencingError(
                f"tracker is bound to camera {self._camera_id!r}, "
                f"got frame from {frame.camera_id!r}"
            )
        if self._last_frame is not None and frame.frame_index <= self._last_frame:
            raise SequencingError(
                f"frame {frame.frame_index} not after {self._last_frame}"
            )
        self._last_frame = frame.frame_index


class IouTracker(_BaseTracker):
    """Greedy best-overlap tracker.

    Per step: active tracks (highest last score first, then lowest id) each
    claim the unclaimed detection with the best IOU to their last box when
    that IOU reaches sigma_iou. Unmatched tracks finish immediately; there
    is no gap bridging. Unmatched detections scoring at least sigma_l start
    new tracks; lower-scoring detections may extend tracks but never start
    one. Finished tracks are kept only if they span at least t_min frames
    and at some point scored sigma_h or better.
    """

    def __init__(self, config: IouTrackerConfig | None = None):
        super().__init__()
        self.config = config or IouTrackerConfig()

    def _retire(self, live: _LiveTrack, finished: list[Track], ids: list[int]) -> None:
        ids.append(live.track_id)
        cfg = self.config
        if len(live.detections) >= cfg.t_min and live.max_score >= cfg.sigma_h:
            track = live.to_track()
            self._finished.append(track)
            finished.append(track)

    def step(self, frame: FrameDetections) -> TrackEvents:
        self._check_frame(frame)
        cfg = self.config
        dets = frame.detections
        n = len(dets)
        dboxes = []
        for d in dets:
            b = d.box
            dboxes.append((b.x, b.y, b.x + b.w, b.y + b.h, b.w * b.h))
        claimed = [False] * n

        extended: list[tuple[int, Detection, Detection, str]] = []
        finished: list[Track] = []
        finished_ids: list[int] = []
        survivors: list[_LiveTrack] = []

        sigma = cfg.sigma_iou
        for live in sorted(self._active, key=lambda t: (-t.last_score, t.track_id)):
            tx1, ty1, tx2, ty2, tarea = live.box
            best = -1.0
            best_j = -1
            for j in range(n):
                if claimed[j]:
                    continue
                bx1, by1, bx2, by2, barea = dboxes[j]
                ix1 = tx1 if tx1 > bx1 else bx1
                ix2 = tx2 if tx2 < bx2 else bx2
                iw = ix2 - ix1
                if iw <= 0.0:
                    continue
                iy1 = ty1 if ty1 > by1 else by1
                iy2 = ty2 if ty2 < by2 else by2
                ih = iy2 - iy1
                if ih <= 0.0:
                    continue
                inter = iw * ih
                v = inter / (tarea + barea - inter)
                if v > best:
                    best = v
                    best_j = j
            if best >= sigma:
                claimed[best_j] = True
                prev = live.detections[-1]
                live.extend(dets[best_j])
                extended.append((live.track_id, prev, dets[best_j], live.majority_class()))
                survivors.append(live)
            else:
                self._retire(live, finished, finished_ids)

        started: list[tuple[int, Detection]] = []
        for j in range(n):
            if claimed[j] or dets[j].score < cfg.sigma_l:
                continue
            live = _LiveTrack(self._next_id, dets[j])
            self._next_id += 1
            survivors.append(live)
            started.append((live.track_id, dets[j]))

        survivors.sort(key=lambda t: t.track_id)
        self._active = survivors
        return TrackEvents(
            frame_index=frame.frame_index,
            started=tuple(started),
            extended=tuple(extended),
            finished_tracks=tuple(finished),
            finished_ids=tuple(finished_ids),
        )

    def finish(self) -> TrackEvents:
        """Flush remaining active tracks through the keep filter."""
        finished: list[Track] = []
        finished_ids: list[int] = []
        for live in self._active:
            self._retire(live, finished, finished_ids)
        self._active = []
        return TrackEvents(
            frame_index=self._last_frame if self._last_frame is not None else -1,
            started=(),
            extended=(),
            finished_tracks=tuple(finished),
            finished_ids=tuple(finished_ids),
        )


class FeatureTracker(_BaseTracker):
    """Appearance tracker over precomputed embeddings.

    Candidate (track, detection) pairs must pass both gates: cosine distance
    at most max_cosine_distance and IOU at least iou_gate. Pairs are taken
    greedily by ascending cosine distance (ties: lower track id, then input
    order). Unmatched tracks survive up to max_age_frames frames before
    finishing, so short occlusions do not split identities. Every detection
    must carry an embedding.
    """

    def __init__(self, config: FeatureTrackerConfig | None = None):
        super().__init__()
        self.config = config or FeatureTrackerConfig()

    def step(self, frame: FrameDetections) -> TrackEvents:
        self._check_frame(frame)
        cfg = self.config
        dets = frame.detections
        for d in dets:
            if d.embedding is None:
                raise InvalidInputError(
                    f"detection at frame {frame.frame_index} has no embedding"
                )

        pairs: list[tuple[float, int, int]] = []
        for ti, live in enumerate(self._active):
            t_emb = live.detections[-1].embedding
            t_box = live.detections[-1].box
            for j, d in enumerate(dets):
                cos = cosine_distance(t_emb, d.embedding)
                if cos > cfg.max_cosine_distance:
                    continue
                tb = t_box
                db = d.box
                ix = min(tb.x + tb.w, db.x + db.w) - max(tb.x, db.x)
                if ix <= 0:
                    continue
                iy = min(tb.y + tb.h, db.y + db.h) - max(tb.y, db.y)
                if iy <= 0:
                    continue
                inter = ix * iy
                v = inter / (tb.w * tb.h + db.w * db.h - inter)
                if v >= cfg.iou_gate:
                    pairs.append((cos, ti, j))
        pairs.sort(key=lambda p: (p[0], self._active[p[1]].track_id, p[2]))

        matched_t: set[int] = set()
        claimed: set[int] = set()
        extended: list[tuple[int, Detection, Detection, str]] = []
        for cos, ti, j in pairs:
            if ti in matched_t or j in claimed:
                continue
            matched_t.add(ti)
            claimed.add(j)
            live = self._active[ti]
            prev = live.detections[-1]
            live.extend(dets[j])
            extended.append((live.track_id, prev, dets[j], live.majority_class()))

        finished: list[Track] = []
        finished_ids: list[int] = []
        survivors: list[_LiveTrack] = []
        for ti, live in enumerate(self._active):
            if ti in matched_t:
                survivors.append(live)
                continue
            live.misses += 1
            if live.misses > cfg.max_age_frames:
                finished_ids.append(live.track_id)
                track = live.to_track()
                self._finished.append(track)
                finished.append(track)
            else:
                survivors.append(live)

        started: list[tuple[int, Detection]] = []
        for j, d in enumerate(dets):
            if j in claimed:
                continue
            live = _LiveTrack(self._next_id, d)
            self._next_id += 1
            survivors.append(live)
            started.append((live.track_id, d))

        survivors.sort(key=lambda t: t.track_id)
        self._active = survivors
        return TrackEvents(
            frame_index=frame.frame_index,
            started=tuple(started),
            extended=tuple(extended),
            finished_tracks=tuple(finished),
            finished_ids=tuple(finished_ids),
        )

    def finish(self) -> TrackEvents:
        finished: list[Track] = []
        finished_ids: list[int] = []
        for live in self._active:
            finished_ids.append(live.track_id)
            track = live.to_track()
            self._finished.append(track)
            finished.append(track)
        self._active = []
        return TrackEvents(
            frame_index=self._last_frame if self._last_frame is not None else -1,
            started=(),
            extended=(),
            finished_tracks=tuple(finished),
            finished_ids=tuple(finished_ids),
        )


def run_tracker(tracker, frames: Iterable[FrameDetections]) -> list[Track]:
    """Convenience: push a whole stream through a tracker, return kept tracks."""
    for frame in frames:
        tracker.step(frame)
    tracker.finish()
    return list(tracker.finished_tracks)


def dump_tracks(tracks: Iterable[Track]) -> str:
    """Track dump: one line per (track_id, frame, box, class)."""
    out = []
    for t in tracks:
        for d in t.detections:
            out.append(
                json.dumps(
                    {
                        "track": t.track_id,
                        "frame": d.frame_index,
                        "box": [d.box.x, d.box.y, d.box.w, d.box.h],
                        "cls": d.class_label,
                    },
                    separators=(",", ":"),
                )
            )
    return "\n".join(out) + ("\n" if out else "")
