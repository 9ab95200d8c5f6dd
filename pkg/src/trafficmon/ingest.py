"""Detection-log, mask, and camera-registry parsing.

The interchange is newline-delimited JSON, one detection per line:

    {"cam": "c1", "frame": 17, "ts_ms": 1700, "cls": "car",
     "box": [10.0, 20.0, 30.0, 40.0], "score": 0.91,
     "emb": [...], "mask": {"poly": [[x, y], ...]}, "digest": 123}

``emb``, ``mask`` and ``digest`` are optional. Embeddings are L2-normalized
on ingest (zero vectors are rejected). Consecutive lines sharing (cam, frame)
form one frame; timestamps must be non-decreasing per camera. Frames with no
detections cannot be represented in this format and are skipped on write.

Masks come as polygons (boundary-inclusive even-odd fill over integer pixel
centers) or as run-length triples ``[row, start, len]``. Queue measurements
travel on their own line format, see :func:`parse_queue_samples`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .core import VEHICLE_CLASSES, BitMask, BoundingBox, Detection
from .counting import CountingLine
from .errors import (
    DuplicateCameraError,
    GeometryError,
    InsufficientDataError,
    MaskDecodeError,
    ParseError,
    SequencingError,
    ValidationError,
)
from .queues import QueueSample

ROAD_TYPES = ("freeway", "intersection")
WEATHER_TAGS = ("clear", "rain", "snow")

_UINT64_MAX = 2**64 - 1


@dataclass(slots=True)
class FrameDetections:
    """All detections of one camera frame, plus an optional content digest."""

    camera_id: str
    frame_index: int
    timestamp_ms: int
    detections: tuple[Detection, ...]
    frame_digest: int | None = None
    masks: dict[int, BitMask] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.camera_id:
            raise ValidationError("camera_id must be non-empty")
        if self.frame_index < 0 or self.timestamp_ms < 0:
            raise ValidationError("frame_index and timestamp_ms must be >= 0")
        if self.frame_digest is not None and not (0 <= self.frame_digest <= _UINT64_MAX):
            raise ValidationError("frame_digest must fit in 64 bits")
        for d in self.detections:
            if d.frame_index != self.frame_index:
                raise ValidationError(
                    f"detection frame {d.frame_index} != frame {self.frame_index}"
                )
            if d.timestamp_ms != self.timestamp_ms:
                raise ValidationError("detections must share the frame timestamp")
        for i in self.masks:
            if not (0 <= i < len(self.detections)):
                raise ValidationError(f"mask index {i} has no detection")


@dataclass(frozen=True)
class CameraRecord:
    camera_id: str
    name: str
    frame_rate_fps: float
    road_type_override: str | None = None
    counting_lines: tuple[CountingLine, ...] = ()
    weather_tag: str | None = None
    location: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.camera_id:
            raise ValidationError("camera_id must be non-empty")
        if not (self.frame_rate_fps > 0):
            raise ValidationError(f"frame_rate_fps must be > 0, got {self.frame_rate_fps}")
        if self.road_type_override is not None and self.road_type_override not in ROAD_TYPES:
            raise ValidationError(f"road_type_override must be one of {ROAD_TYPES}")
        if self.weather_tag is not None and self.weather_tag not in WEATHER_TAGS:
            raise ValidationError(f"weather_tag must be one of {WEATHER_TAGS}")
        if self.location is not None:
            lat, lon = self.location
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise ValidationError(f"location out of range: {self.location}")


def _iter_lines(source: str | bytes | IO | Iterable[str]) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        yield from source.splitlines()
        return
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\r\n")


def _normalized_embedding(raw, line_no: int) -> tuple[float, ...]:
    try:
        vec = tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise ParseError("emb must be a list of numbers", line_no) from None
    if not vec:
        raise ParseError("emb must be non-empty", line_no)
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0 or not math.isfinite(norm):
        raise ParseError("emb must have a finite non-zero norm", line_no)
    if abs(norm - 1.0) > 1e-6:
        vec = tuple(v / norm for v in vec)
    return vec


def _parse_line(line: str, line_no: int) -> tuple[str, int, int, Detection, int | None, dict | None]:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_no) from None
    if not isinstance(rec, dict):
        raise ParseError("record must be an object", line_no)
    try:
        cam = rec["cam"]
        frame = rec["frame"]
        ts_ms = rec["ts_ms"]
        cls = rec["cls"]
        box = rec["box"]
        score = rec["score"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", line_no) from None
    if not isinstance(cam, str) or not cam:
        raise ParseError("cam must be a non-empty string", line_no)
    if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
        raise ParseError("frame must be a non-negative integer", line_no)
    if not isinstance(ts_ms, int) or isinstance(ts_ms, bool) or ts_ms < 0:
        raise ParseError("ts_ms must be a non-negative integer", line_no)
    # the 5-class contract is a hard boundary: surfaced as a validation error,
    # not a parse error, so callers can distinguish schema drift from typos
    if cls not in VEHICLE_CLASSES:
        raise ValidationError(
            f"line {line_no}: unknown class label {cls!r} (expected one of {VEHICLE_CLASSES})"
        )
    if not (isinstance(box, list) and len(box) == 4):
        raise ParseError("box must be [x, y, w, h]", line_no)
    emb = None
    if rec.get("emb") is not None:
        emb = _normalized_embedding(rec["emb"], line_no)
    digest = rec.get("digest")
    if digest is not None and (
        not isinstance(digest, int) or isinstance(digest, bool) or not 0 <= digest <= _UINT64_MAX
    ):
        raise ParseError("digest must be an unsigned 64-bit integer", line_no)
    mask_rec = rec.get("mask")
    if mask_rec is not None and not isinstance(mask_rec, dict):
        raise ParseError("mask must be an object", line_no)
    try:
        det = Detection(
            frame_index=frame,
            timestamp_ms=ts_ms,
            class_label=cls,
            box=BoundingBox(*(float(v) for v in box)),
            score=float(score),
            embedding=emb,
        )
    except (GeometryError, ValidationError, TypeError, ValueError) as exc:
        raise ParseError(str(exc), line_no) from None
    return cam, frame, ts_ms, det, digest, mask_rec


def parse_detection_log(source: str | bytes | IO | Iterable[str]) -> Iterator[FrameDetections]:
    """Stream FrameDetections from a detection log.

    Consecutive lines with the same (cam, frame) are grouped into one frame.
    Raises ParseError (with line number) on malformed lines, ValidationError
    on out-of-contract class labels, SequencingError when a camera's frames
    run backwards.
    """
    group: list[Detection] = []
    group_masks: dict[int, BitMask] = {}
    group_key: tuple[str, int] | None = None
    group_ts = 0
    group_digest: int | None = None
    last_seen: dict[str, tuple[int, int]] = {}

    def flush() -> FrameDetections:
        assert group_key is not None
        return FrameDetections(
            camera_id=group_key[0],
            frame_index=group_key[1],
            timestamp_ms=group_ts,
            detections=tuple(group),
            frame_digest=group_digest,
            masks=dict(group_masks),
        )

    line_no = 0
    for raw in _iter_lines(source):
        line_no += 1
        if not raw.strip():
            continue
        cam, frame, ts_ms, det, digest, mask_rec = _parse_line(raw, line_no)
        key = (cam, frame)
        if key != group_key:
            if group_key is not None:
                yield flush()
            prev = last_seen.get(cam)
            if prev is not None:
                if frame <= prev[0]:
                    raise SequencingError(
                        f"line {line_no}: camera {cam!r} frame {frame} "
                        f"not after frame {prev[0]}"
                    )
                if ts_ms < prev[1]:
                    raise SequencingError(
                        f"line {line_no}: camera {cam!r} timestamp {ts_ms} "
                        f"before {prev[1]}"
                    )
            last_seen[cam] = (frame, ts_ms)
            group = []
            group_masks = {}
            group_key = key
            group_ts = ts_ms
            group_digest = digest
        else:
            if ts_ms != group_ts:
                raise ParseError(
                    f"timestamp {ts_ms} differs within frame {frame}", line_no
                )
            if digest is not None:
                if group_digest is not None and digest != group_digest:
                    raise ParseError("conflicting digests within one frame", line_no)
                group_digest = digest
        if mask_rec is not None:
            try:
                group_masks[len(group)] = decode_mask(mask_rec)
            except MaskDecodeError as exc:
                raise ParseError(str(exc), line_no) from None
        group.append(det)
    if group_key is not None:
        yield flush()


def serialize_detection_log(frames: Iterable[FrameDetections]) -> str:
    """Inverse of parse_detection_log; deterministic field order and floats."""
    out: list[str] = []
    for fr in frames:
        for i, d in enumerate(fr.detections):
            rec: dict = {
                "cam": fr.camera_id,
                "frame": fr.frame_index,
                "ts_ms": fr.timestamp_ms,
                "cls": d.class_label,
                "box": [d.box.x, d.box.y, d.box.w, d.box.h],
                "score": d.score,
            }
            if d.embedding is not None:
                rec["emb"] = list(d.embedding)
            mask = fr.masks.get(i)
            if mask is not None:
                rec["mask"] = {"rle": _mask_runs(mask)}
            if i == 0 and fr.frame_digest is not None:
                rec["digest"] = fr.frame_digest
            out.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(out) + ("\n" if out else "")


def _mask_runs(mask: BitMask) -> list[list[int]]:
    """Canonical row-major run-length triples for a mask."""
    by_row: dict[int, list[int]] = {}
    for x, y in mask.set_pixels:
        by_row.setdefault(y, []).append(x)
    runs: list[list[int]] = []
    for row in sorted(by_row):
        xs = sorted(by_row[row])
        start = xs[0]
        length = 1
        for x in xs[1:]:
            if x == start + length:
                length += 1
            else:
                runs.append([row, start, length])
                start, length = x, 1
        runs.append([row, start, length])
    return runs


def _on_segment(px: float, py: float, x1, y1, x2, y2) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= px <= max(x1, x2) and min(y1, y2) <= py <= max(y1, y2)


def _point_in_polygon(px: float, py: float, poly: list[tuple[float, float]]) -> bool:
    """Even-odd fill, boundary-inclusive."""
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if _on_segment(px, py, x1, y1, x2, y2):
            return True
        if (y1 > py) != (y2 > py):
            # x of edge at the scanline height
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def decode_mask(record: dict, width: int | None = None, height: int | None = None) -> BitMask:
    """Decode a polygon or run-length mask record into a BitMask.

    Polygon fill is even-odd over integer pixel coordinates, boundary
    inclusive. Bounds default to the tight extent of the content; explicit
    width/height reject out-of-bounds content with MaskDecodeError.
    """
    if "poly" in record:
        return _decode_polygon(record["poly"], width, height)
    if "rle" in record:
        return _decode_rle(record["rle"], width, height)
    raise MaskDecodeError("mask record needs a 'poly' or 'rle' key")


def _decode_polygon(raw, width: int | None, height: int | None) -> BitMask:
    try:
        poly = [(float(x), float(y)) for x, y in raw]
    except (TypeError, ValueError):
        raise MaskDecodeError("polygon must be a list of [x, y] pairs") from None
    if len(set(poly)) < 3:
        raise MaskDecodeError("polygon needs at least 3 distinct vertices")
    area2 = 0.0
    for i in range(len(poly)):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % len(poly)]
        area2 += x1 * y2 - x2 * y1
    if area2 == 0.0:
        raise MaskDecodeError("degenerate polygon encloses no area")
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    if min(xs) < 0 or min(ys) < 0:
        raise MaskDecodeError("polygon extends below (0, 0)")
    x_hi = math.ceil(max(xs))
    y_hi = math.ceil(max(ys))
    w = width if width is not None else x_hi + 1
    h = height if height is not None else y_hi + 1
    if x_hi >= w or y_hi >= h:
        raise MaskDecodeError(f"polygon exceeds {w}x{h} bounds")
    pixels = frozenset(
        (px, py)
        for py in range(math.floor(min(ys)), y_hi + 1)
        for px in range(math.floor(min(xs)), x_hi + 1)
        if _point_in_polygon(float(px), float(py), poly)
    )
    return BitMask(width=w, height=h, set_pixels=pixels)


def _decode_rle(raw, width: int | None, height: int | None) -> BitMask:
    if not isinstance(raw, list):
        raise MaskDecodeError("rle must be a list of [row, start, len] triples")
    pixels: set[tuple[int, int]] = set()
    max_x = -1
    max_y = -1
    for item in raw:
        if not (isinstance(item, (list, tuple)) and len(item) == 3):
            raise MaskDecodeError("rle must be a list of [row, start, len] triples")
        row, start, length = item
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in item):
            raise MaskDecodeError("rle values must be integers")
        if row < 0 or start < 0 or length <= 0:
            raise MaskDecodeError(f"invalid run [{row}, {start}, {length}]")
        if width is not None and start + length > width:
            raise MaskDecodeError(f"run [{row}, {start}, {length}] exceeds width {width}")
        if height is not None and row >= height:
            raise MaskDecodeError(f"run row {row} exceeds height {height}")
        for x in range(start, start + length):
            pixels.add((x, row))
        max_x = max(max_x, start + length - 1)
        max_y = max(max_y, row)
    w = width if width is not None else max_x + 1
    h = height if height is not None else max_y + 1
    return BitMask(width=max(w, 0), height=max(h, 0), set_pixels=frozenset(pixels))


def camera_record_from_dict(entry: dict) -> CameraRecord:
    """One registry entry (or POST body) to a validated CameraRecord."""
    if not isinstance(entry, dict):
        raise ParseError("camera entry must be an object")
    try:
        lines = tuple(
            CountingLine(
                label=cl["label"],
                p1=tuple(float(v) for v in cl["p1"]),
                p2=tuple(float(v) for v in cl["p2"]),
                positive_dir=cl["positive_dir"],
            )
            for cl in entry.get("counting_lines", ())
        )
        loc = entry.get("location")
        return CameraRecord(
            camera_id=entry["camera_id"],
            name=entry["name"],
            frame_rate_fps=float(entry["frame_rate_fps"]),
            road_type_override=entry.get("road_type_override"),
            counting_lines=lines,
            weather_tag=entry.get("weather_tag"),
            location=tuple(float(v) for v in loc) if loc is not None else None,
        )
    except KeyError as exc:
        raise ParseError(f"camera entry missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ParseError(f"malformed camera entry: {exc}") from None


def load_camera_registry(source: str | bytes | IO) -> list[CameraRecord]:
    """Load the camera registry (a JSON array of camera objects)."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if not source.strip():
        return []
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if isinstance(doc, dict) and "cameras" in doc:
        doc = doc["cameras"]
    if not isinstance(doc, list):
        raise ParseError("registry must be a JSON array of camera objects")
    records: list[CameraRecord] = []
    seen: set[str] = set()
    for entry in doc:
        rec = camera_record_from_dict(entry)
        if rec.camera_id in seen:
            raise DuplicateCameraError(f"duplicate camera_id {rec.camera_id!r}")
        seen.add(rec.camera_id)
        records.append(rec)
    return records


def serialize_camera_registry(records: Iterable[CameraRecord]) -> str:
    """Inverse of load_camera_registry."""
    doc = []
    for r in records:
        entry: dict = {
            "camera_id": r.camera_id,
            "name": r.name,
            "frame_rate_fps": r.frame_rate_fps,
        }
        if r.road_type_override is not None:
            entry["road_type_override"] = r.road_type_override
        if r.counting_lines:
            entry["counting_lines"] = [
                {
                    "label": cl.label,
                    "p1": list(cl.p1),
                    "p2": list(cl.p2),
                    "positive_dir": cl.positive_dir,
                }
                for cl in r.counting_lines
            ]
        if r.weather_tag is not None:
            entry["weather_tag"] = r.weather_tag
        if r.location is not None:
            entry["location"] = list(r.location)
        doc.append(entry)
    return json.dumps(doc, indent=2) + "\n"


def parse_queue_samples(source: str | bytes | IO | Iterable[str]) -> Iterator[QueueSample]:
    """Stream queue measurements from a log of lines like
    ``{"cam": "c1", "ts_ms": 0, "pl": 37.5}`` or with an inline ``mask``
    record instead of ``pl`` (the pixel length is then measured from the
    mask). ``mask_id`` is optional.
    """
    from .queues import mask_pixel_length

    line_no = 0
    for raw in _iter_lines(source):
        line_no += 1
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line_no) from None
        if not isinstance(rec, dict):
            raise ParseError("record must be an object", line_no)
        try:
            cam = rec["cam"]
            ts_ms = rec["ts_ms"]
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", line_no) from None
        if not isinstance(cam, str) or not cam:
            raise ParseError("cam must be a non-empty string", line_no)
        if not isinstance(ts_ms, int) or isinstance(ts_ms, bool) or ts_ms < 0:
            raise ParseError("ts_ms must be a non-negative integer", line_no)
        if "pl" in rec:
            try:
                pl = float(rec["pl"])
            except (TypeError, ValueError):
                raise ParseError("pl must be a number", line_no) from None
        elif "mask" in rec:
            try:
                pl = mask_pixel_length(decode_mask(rec["mask"]))
            except (MaskDecodeError, ValidationError, InsufficientDataError) as exc:
                raise ParseError(str(exc), line_no) from None
        else:
            raise ParseError("record needs 'pl' or 'mask'", line_no)
        try:
            sample = QueueSample(
                camera_id=cam,
                timestamp_ms=ts_ms,
                pixel_length=pl,
                mask_id=rec.get("mask_id"),
            )
        except ValidationError as exc:
            raise ParseError(str(exc), line_no) from None
        yield sample


def serialize_queue_samples(samples: Iterable[QueueSample]) -> str:
    """Inverse of parse_queue_samples (always writes the measured pl)."""
    out = []
    for s in samples:
        rec: dict = {"cam": s.camera_id, "ts_ms": s.timestamp_ms, "pl": s.pixel_length}
        if s.mask_id is not None:
            rec["mask_id"] = s.mask_id
        out.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(out) + ("\n" if out else "")
