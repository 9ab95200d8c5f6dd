"""Independent reference implementations used to cross-check the engine.

Everything here is deliberately written the slow, obvious way and only on
plain tuples/floats, not engine types: these are the second route for
dual-route tests, so they must not share code (or mistakes) with the package.
"""

from __future__ import annotations

import math


def iou_rasterized(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    """IOU of two integer boxes by counting unit grid cells."""
    def cells(box):
        x, y, w, h = box
        return {(i, j) for i in range(x, x + w) for j in range(y, y + h)}

    ca, cb = cells(a), cells(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


def diameter_bruteforce(points) -> float:
    """Max pairwise distance, all pairs."""
    pts = list(points)
    best = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dx = pts[i][0] - pts[j][0]
            dy = pts[i][1] - pts[j][1]
            d = math.hypot(dx, dy)
            if d > best:
                best = d
    return best


def quantile_linear(sorted_values, q: float) -> float:
    """The classic linear-interpolation quantile on presorted data."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    h = (n - 1) * q
    lo = int(math.floor(h))
    frac = h - lo
    if lo + 1 >= n:
        return float(sorted_values[lo])
    return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo])


def pstdev(values) -> float:
    vals = list(values)
    mean = sum(vals) / len(vals)
    return math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))


def thresholds_reference(lengths_by_bin: dict[int, list[float]], k: float):
    """(low, medium, high) cuts from per-bin quartiles, scalar arithmetic only."""
    q1s, q2s, q3s = [], [], []
    for b in sorted(lengths_by_bin):
        xs = sorted(lengths_by_bin[b])
        q1s.append(quantile_linear(xs, 0.25))
        q2s.append(quantile_linear(xs, 0.50))
        q3s.append(quantile_linear(xs, 0.75))
    base = max((a + b + c) / 3.0 for a, b, c in zip(q1s, q2s, q3s))
    return (base + k * pstdev(q1s), base + k * pstdev(q2s), base + k * pstdev(q3s))


def greedy_iou_assign(track_boxes, det_boxes, sigma: float):
    """Reference greedy association: each track (in the given order) claims its
    best-overlap unclaimed detection when the overlap reaches sigma.

    Returns {track index -> detection index}.
    """
    def iou(p, q):
        ax, ay, aw, ah = p
        bx, by, bw, bh = q
        ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
        iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
        inter = ix * iy
        if inter == 0.0:
            return 0.0
        return inter / (aw * ah + bw * bh - inter)

    taken: set[int] = set()
    out: dict[int, int] = {}
    for ti, tb in enumerate(track_boxes):
        best_v = -1.0
        best_j = None
        for j, db in enumerate(det_boxes):
            if j in taken:
                continue
            v = iou(tb, db)
            if v > best_v:
                best_v = v
                best_j = j
        if best_j is not None and best_v >= sigma:
            taken.add(best_j)
            out[ti] = best_j
    return out


def segment_crossing_reference(a, b, p1, p2):
    """Whether segment a->b crosses segment p1->p2, and the side sign of b.

    Parametric solve; endpoint touches count, collinear overlap does not.
    Returns None for no crossing, else +1/-1: the sign of
    cross(p2-p1, b-p1), falling back to -sign for a when b sits on the line.
    """
    rx, ry = b[0] - a[0], b[1] - a[1]
    sx, sy = p2[0] - p1[0], p2[1] - p1[1]
    denom = rx * sy - ry * sx
    qpx, qpy = p1[0] - a[0], p1[1] - a[1]
    if denom == 0.0:
        return None  # parallel or collinear
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    if not (0.0 <= t <= 1.0 and 0.0 <= u <= 1.0):
        return None
    side_b = sx * (b[1] - p1[1]) - sy * (b[0] - p1[0])
    if side_b != 0.0:
        return 1 if side_b > 0 else -1
    side_a = sx * (a[1] - p1[1]) - sy * (a[0] - p1[0])
    if side_a == 0.0:
        return None  # both endpoints on the line
    return 1 if -side_a > 0 else -1


def point_in_rect(px: float, py: float, x0: float, y0: float, x1: float, y1: float) -> bool:
    return x0 <= px <= x1 and y0 <= py <= y1


def f1_reference(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall)


def s3_reference(f1: float, rmse_s: float, lo: float = 0.0, hi: float = 300.0) -> float:
    clamped = min(max(rmse_s, lo), hi)
    return f1 * (1.0 - (clamped - lo) / (hi - lo))
