from __future__ import annotations

import math

import pytest

from trafficmon.core import BoundingBox, Detection
from trafficmon.ingest import FrameDetections


def make_box(x=0.0, y=0.0, w=10.0, h=10.0) -> BoundingBox:
    return BoundingBox(x=x, y=y, w=w, h=h)


def make_detection(
    frame=0,
    ts=None,
    cls="car",
    box=None,
    score=0.9,
    embedding=None,
) -> Detection:
    if ts is None:
        ts = frame * 100
    if box is None:
        box = make_box()
    return Detection(
        frame_index=frame,
        timestamp_ms=ts,
        class_label=cls,
        box=box,
        score=score,
        embedding=embedding,
    )


def make_frame(camera="cam-1", frame=0, ts=None, detections=(), digest=None, masks=None) -> FrameDetections:
    if ts is None:
        ts = frame * 100
    return FrameDetections(
        camera_id=camera,
        frame_index=frame,
        timestamp_ms=ts,
        detections=tuple(detections),
        frame_digest=digest,
        masks=masks or {},
    )


def unit_vector(*values: float) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in values))
    return tuple(v / norm for v in values)


def walk_frames(camera="cam-1", boxes_per_frame=(), cls="car", score=0.9, fps=10.0):
    """Frames from a list of per-frame box lists; None entries leave gaps."""
    frames = []
    for i, boxes in enumerate(boxes_per_frame):
        dets = []
        for b in boxes:
            if b is None:
                continue
            dets.append(
                make_detection(frame=i, ts=int(i * 1000 / fps), cls=cls, box=make_box(*b), score=score)
            )
        frames.append(make_frame(camera=camera, frame=i, ts=int(i * 1000 / fps), detections=dets))
    return frames


@pytest.fixture
def single_lane_scenario():
    from trafficmon.simulator import LaneConfig, ScenarioConfig

    def build(seed=5, duration_s=60.0, spawn_rates=None, **kwargs):
        lanes = (
            LaneConfig(
                points=((0.0, 300.0), (1900.0, 300.0)),
                direction="E",
                speed_px_s=100.0,
                spawn_rates=spawn_rates or {"car": 8.0, "truck": 2.0},
            ),
        )
        return ScenarioConfig(seed=seed, duration_s=duration_s, lanes=lanes, **kwargs)

    return build
