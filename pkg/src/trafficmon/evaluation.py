"""Engine metrics: binary classification ratios, confusion matrices, track
switch rate, anomaly matching, the S3 composite, and spatial error heatmaps.

accuracy comes in two flavors on purpose: accuracy_standard is the usual
(TP+TN)/total, while accuracy_paper is TP/total, kept because a family of
published traffic benchmarks prints the ratio that way and fixtures must
reproduce it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .anomaly import AnomalyEvent
from .core import VEHICLE_CLASSES, Track, iou
from .errors import MetricUndefinedError, ValidationError


@dataclass(frozen=True, slots=True)
class BinaryCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("counts must be >= 0")
        if self.tp + self.fp + self.tn + self.fn == 0:
            raise ValidationError("at least one count must be positive")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall."""
    if precision + recall == 0:
        raise MetricUndefinedError("f1 is undefined when precision + recall = 0")
    return 2.0 * precision * recall / (precision + recall)


def classification_metrics(counts: BinaryCounts) -> dict[str, float]:
    """Precision, recall, both accuracy variants, and F1 from binary counts."""
    if counts.tp + counts.fp == 0:
        raise MetricUndefinedError("precision is undefined when TP + FP = 0")
    if counts.tp + counts.fn == 0:
        raise MetricUndefinedError("recall is undefined when TP + FN = 0")
    precision = counts.tp / (counts.tp + counts.fp)
    recall = counts.tp / (counts.tp + counts.fn)
    return {
        "precision": precision,
        "recall": recall,
        "accuracy_paper": counts.tp / counts.total,
        "accuracy_standard": (counts.tp + counts.tn) / counts.total,
        "f1": f_score(precision, recall),
    }


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-normalized confusion matrix; rows are predicted classes, columns
    true classes. Rows with no observations stay all-zero."""

    classes: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    row_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.classes)
        if len(self.rows) != n or any(len(r) != n for r in self.rows):
            raise ValidationError("matrix must be square over the class list")
        for cls, row, count in zip(self.classes, self.rows, self.row_counts):
            if count > 0 and abs(sum(row) - 1.0) > 1e-6:
                raise ValidationError(f"row {cls!r} sums to {sum(row)}, expected 1")
            if count == 0 and any(row):
                raise ValidationError(f"row {cls!r} has values but no observations")

    def cell(self, predicted: str, true: str) -> float:
        return self.rows[self.classes.index(predicted)][self.classes.index(true)]


def confusion_matrix(
    pairs: Iterable[tuple[str, str]], classes: Sequence[str] = VEHICLE_CLASSES
) -> ConfusionMatrix:
    """Count (predicted, true) pairs and normalize each predicted-class row."""
    index = {c: i for i, c in enumerate(classes)}
    n = len(classes)
    counts = [[0] * n for _ in range(n)]
    for predicted, true in pairs:
        if predicted not in index:
            raise ValidationError(f"unknown predicted class {predicted!r}")
        if true not in index:
            raise ValidationError(f"unknown true class {true!r}")
        counts[index[predicted]][index[true]] += 1
    rows = []
    row_counts = []
    for r in counts:
        total = sum(r)
        row_counts.append(total)
        rows.append(tuple(v / total for v in r) if total else tuple(0.0 for _ in r))
    return ConfusionMatrix(
        classes=tuple(classes), rows=tuple(rows), row_counts=tuple(row_counts)
    )


def _boxes_by_frame(tracks: Iterable[Track]):
    by_frame: dict[int, list[tuple[int, object]]] = {}
    for t in tracks:
        for d in t.detections:
            by_frame.setdefault(d.frame_index, []).append((t.track_id, d.box))
    return by_frame


def switch_rate(predicted: Iterable[Track], truth: Sequence[Track]) -> float:
    """Identity switches per ground-truth vehicle.

    For every frame of a truth track, the predicted track whose box has the
    best positive IOU claims the match (ties to the lower id); a switch is a
    frame whose matched id differs from the previous matched id.
    """
    truth = list(truth)
    if not truth:
        raise MetricUndefinedError("switch_rate is undefined without ground truth")
    predicted_by_frame = _boxes_by_frame(predicted)
    switches = 0
    for gt in truth:
        last_id: int | None = None
        for d in gt.detections:
            best_iou = 0.0
            best_id: int | None = None
            for tid, box in predicted_by_frame.get(d.frame_index, ()):
                v = iou(d.box, box)
                if v > best_iou or (v == best_iou and v > 0.0 and (best_id is None or tid < best_id)):
                    best_iou = v
                    best_id = tid
            if best_id is None:
                continue
            if last_id is not None and best_id != last_id:
                switches += 1
            last_id = best_id
    return switches / len(truth)


def match_frames(
    predicted: Iterable[Track],
    truth: Iterable[Track],
    iou_min: float = 0.1,
):
    """Greedy one-to-one per-frame box matching by descending IOU.

    Returns (pairs, extra_predicted, missed_truth): pairs are
    (predicted_det, truth_det) with IOU >= iou_min; the other two lists hold
    detections nothing claimed. Ties break toward earlier detections.
    """
    pred_by_frame: dict[int, list] = {}
    for t in predicted:
        for d in t.detections:
            pred_by_frame.setdefault(d.frame_index, []).append(d)
    truth_by_frame: dict[int, list] = {}
    for t in truth:
        for d in t.detections:
            truth_by_frame.setdefault(d.frame_index, []).append(d)

    pairs: list[tuple] = []
    extra: list = []
    missed: list = []
    for frame in sorted(set(pred_by_frame) | set(truth_by_frame)):
        preds = pred_by_frame.get(frame, [])
        truths = truth_by_frame.get(frame, [])
        scored = []
        for i, p in enumerate(preds):
            for j, g in enumerate(truths):
                v = iou(p.box, g.box)
                if v >= iou_min:
                    scored.append((-v, i, j))
        scored.sort()
        used_p: set[int] = set()
        used_t: set[int] = set()
        for _, i, j in scored:
            if i in used_p or j in used_t:
                continue
            used_p.add(i)
            used_t.add(j)
            pairs.append((preds[i], truths[j]))
        extra.extend(p for i, p in enumerate(preds) if i not in used_p)
        missed.extend(g for j, g in enumerate(truths) if j not in used_t)
    return pairs, extra, missed


def per_class_f1_scores(
    pairs: Sequence[tuple],
    extra_predicted: Sequence,
    missed_truth: Sequence,
    classes: Sequence[str] = VEHICLE_CLASSES,
) -> dict[str, float]:
    """F1 per class from matched detection pairs plus the leftovers.

    A pair counts as a true positive only when both sides carry the class;
    class-mismatched pairs count against both classes. Classes that never
    appear are left out of the result.
    """
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for p, g in pairs:
        if p.class_label == g.class_label:
            tp[p.class_label] += 1
        else:
            fp[p.class_label] += 1
            fn[g.class_label] += 1
    for p in extra_predicted:
        fp[p.class_label] += 1
    for g in missed_truth:
        fn[g.class_label] += 1
    out: dict[str, float] = {}
    for c in classes:
        support = tp[c] + fp[c] + fn[c]
        if support == 0:
            continue
        out[c] = 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c])
    return out


def match_anomalies(
    predicted: Sequence[AnomalyEvent],
    truth: Sequence[AnomalyEvent],
    window_s: float = 10.0,
) -> tuple[list[tuple[AnomalyEvent, AnomalyEvent]], list[AnomalyEvent], list[AnomalyEvent]]:
    """Greedy one-to-one matching of predicted to true events by start-time
    proximity. Pairs within window_s are true positives; leftovers are false
    positives (predictions) and false negatives (truths). One truth can
    absorb only one prediction.
    """
    candidates = []
    for i, p in enumerate(predicted):
        for j, t in enumerate(truth):
            delta = abs(p.start_ts_ms - t.start_ts_ms) / 1000.0
            if delta <= window_s:
                candidates.append((delta, i, j))
    candidates.sort()
    used_p: set[int] = set()
    used_t: set[int] = set()
    tp_pairs: list[tuple[AnomalyEvent, AnomalyEvent]] = []
    for _, i, j in candidates:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        tp_pairs.append((predicted[i], truth[j]))
    fp = [p for i, p in enumerate(predicted) if i not in used_p]
    fn = [t for j, t in enumerate(truth) if j not in used_t]
    return tp_pairs, fp, fn


@dataclass(frozen=True, slots=True)
class AnomalyScore:
    f1: float
    rmse_s: float
    nrmse: float
    s3: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.nrmse <= 1.0):
            raise ValidationError("nrmse must be in [0, 1]")
        if abs(self.s3 - self.f1 * (1.0 - self.nrmse)) > 1e-9:
            raise ValidationError("s3 must equal f1 * (1 - nrmse)")


def s3_score(
    f1: float,
    tp_time_errors_s: Sequence[float],
    nrmse_min: float = 0.0,
    nrmse_max: float = 300.0,
) -> AnomalyScore:
    """Composite anomaly score: F1 discounted by normalized start-time RMSE.

    RMSE over the matched events' start-time errors is clamped into
    [nrmse_min, nrmse_max] then min-max normalized; an empty error list
    counts as zero error.
    """
    if not (0.0 <= f1 <= 1.0):
        raise ValidationError(f"f1 must be in [0, 1], got {f1}")
    if not nrmse_max > nrmse_min:
        raise ValidationError("nrmse_max must exceed nrmse_min")
    if tp_time_errors_s:
        rmse = math.sqrt(sum(e * e for e in tp_time_errors_s) / len(tp_time_errors_s))
    else:
        rmse = 0.0
    clamped = min(max(rmse, nrmse_min), nrmse_max)
    nrmse = (clamped - nrmse_min) / (nrmse_max - nrmse_min)
    return AnomalyScore(f1=f1, rmse_s=rmse, nrmse=nrmse, s3=f1 * (1.0 - nrmse))


def score_anomalies(
    predicted: Sequence[AnomalyEvent],
    truth: Sequence[AnomalyEvent],
    window_s: float = 10.0,
) -> AnomalyScore:
    """match_anomalies + classification + s3 in one step."""
    if not predicted:
        raise MetricUndefinedError("anomaly precision undefined without predictions")
    if not truth:
        raise MetricUndefinedError("anomaly recall undefined without ground truth")
    tp_pairs, fp, fn = match_anomalies(predicted, truth, window_s)
    tp = len(tp_pairs)
    precision = tp / (tp + len(fp))
    recall = tp / (tp + len(fn))
    f1 = f_score(precision, recall) if precision + recall > 0 else 0.0
    errors = [abs(p.start_ts_ms - t.start_ts_ms) / 1000.0 for p, t in tp_pairs]
    return s3_score(f1, errors)


def detection_heatmap(
    outcomes: Iterable[tuple[str, tuple[float, float]]],
    grid: tuple[int, int] = (8, 8),
    image_size: tuple[float, float] = (1920.0, 1080.0),
) -> dict[str, np.ndarray]:
    """Spatial histograms of TP/FP/FN box centers.

    Returns one (rows x cols) integer grid per category. Centers must lie
    inside [0, width) x [0, height).
    """
    rows, cols = grid
    width, height = image_size
    if rows < 1 or cols < 1:
        raise ValidationError("grid must be at least 1x1")
    grids = {
        "TP": np.zeros((rows, cols), dtype=np.int64),
        "FP": np.zeros((rows, cols), dtype=np.int64),
        "FN": np.zeros((rows, cols), dtype=np.int64),
    }
    for category, (x, y) in outcomes:
        if category not in grids:
            raise ValidationError(f"category must be TP, FP or FN, got {category!r}")
        if not (0.0 <= x < width and 0.0 <= y < height):
            raise ValidationError(f"center ({x}, {y}) outside {width}x{height}")
        r = int(y * rows / height)
        c = int(x * cols / width)
        grids[category][r, c] += 1
    return grids


def build_report(
    confusion: ConfusionMatrix | None = None,
    per_class_f1: dict[str, float] | None = None,
    track_switch_rate: float | None = None,
    anomaly: AnomalyScore | None = None,
    count_percentages: dict[str, float] | None = None,
) -> dict:
    """Assemble the JSON-ready evaluation report."""
    report: dict = {}
    if confusion is not None:
        report["confusion"] = {
            "classes": list(confusion.classes),
            "rows": [list(r) for r in confusion.rows],
            "row_counts": list(confusion.row_counts),
        }
    if per_class_f1 is not None:
        report["per_class_f1"] = dict(per_class_f1)
    if track_switch_rate is not None:
        report["switch_rate"] = track_switch_rate
    if anomaly is not None:
        report["anomaly"] = {
            "f1": anomaly.f1,
            "rmse": anomaly.rmse_s,
            "nrmse": anomaly.nrmse,
            "s3": anomaly.s3,
        }
    if count_percentages is not None:
        report["counts"] = dict(count_percentages)
    return report
