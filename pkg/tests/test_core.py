from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from trafficmon.core import (
    VEHICLE_CLASSES,
    BitMask,
    BoundingBox,
    Detection,
    Track,
    cosine_distance,
    iou,
)
from trafficmon.errors import GeometryError, InvalidInputError, ValidationError

from .conftest import make_box, make_detection, unit_vector
from .oracles import iou_rasterized

int_boxes = st.tuples(
    st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 40), st.integers(1, 40)
)


class TestBoundingBox:
    def test_derived_properties(self):
        b = BoundingBox(x=10.0, y=20.0, w=4.0, h=8.0)
        assert b.x2 == 14.0
        assert b.y2 == 28.0
        assert b.area == 32.0
        assert b.center == (12.0, 24.0)

    @pytest.mark.parametrize("w,h", [(0.0, 5.0), (5.0, 0.0), (-1.0, 5.0), (5.0, -2.0)])
    def test_rejects_degenerate(self, w, h):
        with pytest.raises(GeometryError):
            BoundingBox(x=0.0, y=0.0, w=w, h=h)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(GeometryError):
            BoundingBox(x=bad, y=0.0, w=1.0, h=1.0)

    def test_negative_origin_is_fine(self):
        # boxes straddling the image edge are valid detector output
        assert BoundingBox(x=-40.0, y=-3.0, w=80.0, h=30.0).area == 2400.0


class TestIou:
    def test_identical_boxes(self):
        b = make_box(5, 5, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(make_box(0, 0, 10, 10), make_box(20, 0, 10, 10)) == 0.0

    def test_touching_edges_count_as_disjoint(self):
        assert iou(make_box(0, 0, 10, 10), make_box(10, 0, 10, 10)) == 0.0

    def test_half_overlap(self):
        # 10x10 boxes offset by 5 in x: inter 50, union 150
        v = iou(make_box(0, 0, 10, 10), make_box(5, 0, 10, 10))
        assert v == pytest.approx(1.0 / 3.0)

    def test_containment(self):
        outer = make_box(0, 0, 10, 10)
        inner = make_box(2, 2, 5, 5)
        assert iou(outer, inner) == pytest.approx(25.0 / 100.0)

    @given(a=int_boxes, b=int_boxes)
    def test_matches_rasterized_oracle(self, a, b):
        va = iou(make_box(*a), make_box(*b))
        vb = iou_rasterized(a, b)
        assert va == pytest.approx(vb, abs=1e-12)

    @given(a=int_boxes, b=int_boxes)
    def test_symmetric_and_bounded(self, a, b):
        ba, bb = make_box(*a), make_box(*b)
        assert iou(ba, bb) == iou(bb, ba)
        assert 0.0 <= iou(ba, bb) <= 1.0


class TestCosineDistance:
    def test_identical_unit_vectors(self):
        v = unit_vector(1.0, 2.0, 3.0)
        assert cosine_distance(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_distance((1.0, 0.0), (0.0, 1.0)) == pytest.approx(1.0)

    def test_opposite(self):
        assert cosine_distance((1.0, 0.0), (-1.0, 0.0)) == pytest.approx(2.0)

    def test_scale_invariant(self):
        a = (0.3, 0.4)
        b = (3.0, 4.0)
        assert cosine_distance(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            cosine_distance((1.0, 0.0), (1.0, 0.0, 0.0))

    def test_zero_vector(self):
        with pytest.raises(InvalidInputError):
            cosine_distance((0.0, 0.0), (1.0, 0.0))


class TestDetection:
    def test_valid(self):
        d = make_detection(frame=3, cls="bus", score=0.5)
        assert d.center == d.box.center

    def test_rejects_unknown_class(self):
        with pytest.raises(ValidationError):
            make_detection(cls="bicycle")

    @pytest.mark.parametrize("score", [-0.1, 1.1])
    def test_rejects_score_out_of_range(self, score):
        with pytest.raises(ValidationError):
            make_detection(score=score)

    def test_rejects_negative_frame(self):
        with pytest.raises(ValidationError):
            make_detection(frame=-1)

    def test_rejects_non_unit_embedding(self):
        with pytest.raises(ValidationError):
            make_detection(embedding=(0.5, 0.5))

    def test_accepts_unit_embedding(self):
        d = make_detection(embedding=unit_vector(1.0, 1.0, 1.0))
        assert math.isclose(sum(x * x for x in d.embedding), 1.0, abs_tol=1e-9)


class TestTrack:
    def test_requires_detections(self):
        with pytest.raises(ValidationError):
            Track(track_id=1, detections=())

    def test_requires_increasing_frames(self):
        d0 = make_detection(frame=2)
        d1 = make_detection(frame=2)
        with pytest.raises(ValidationError):
            Track(track_id=1, detections=(d0, d1))

    def test_rejects_unknown_state(self):
        with pytest.raises(ValidationError):
            Track(track_id=1, detections=(make_detection(),), state="zombie")

    def test_first_last_len(self):
        dets = tuple(make_detection(frame=i) for i in range(4))
        t = Track(track_id=7, detections=dets)
        assert len(t) == 4
        assert t.first is dets[0]
        assert t.last is dets[-1]

    def test_majority_class(self):
        dets = (
            make_detection(frame=0, cls="car"),
            make_detection(frame=1, cls="truck"),
            make_detection(frame=2, cls="truck"),
        )
        assert Track(track_id=1, detections=dets).class_label == "truck"

    def test_majority_tie_breaks_by_class_order(self):
        dets = (
            make_detection(frame=0, cls="truck"),
            make_detection(frame=1, cls="car"),
        )
        # car precedes truck in the canonical class tuple
        assert Track(track_id=1, detections=dets).class_label == "car"

    @given(
        labels=st.lists(st.sampled_from(VEHICLE_CLASSES), min_size=1, max_size=12)
    )
    def test_majority_class_matches_counting(self, labels):
        dets = tuple(make_detection(frame=i, cls=c) for i, c in enumerate(labels))
        winner = Track(track_id=1, detections=dets).class_label
        counts = {c: labels.count(c) for c in set(labels)}
        assert counts.get(winner, 0) == max(counts.values())


class TestBitMask:
    def test_in_bounds(self):
        m = BitMask(width=4, height=3, set_pixels=frozenset({(0, 0), (3, 2)}))
        assert len(m) == 2

    def test_rejects_out_of_bounds_pixel(self):
        with pytest.raises(ValidationError):
            BitMask(width=4, height=3, set_pixels=frozenset({(4, 0)}))

    def test_rejects_negative_dimensions(self):
        with pytest.raises(ValidationError):
            BitMask(width=-1, height=3)

    def test_empty_mask_allowed(self):
        assert len(BitMask(width=0, height=0)) == 0
