"""Batch entry points: every pipeline stage as a subcommand.

    trafficmon simulate --config scenario.json --log-out det.jsonl --truth-out gt.jsonl
    trafficmon track --log det.jsonl --tracker iou > tracks.jsonl
    trafficmon queue --samples queue.jsonl --heatmap-out heatmap.csv
    trafficmon anomaly --log det.jsonl --road-type freeway > events.jsonl
    trafficmon count --log det.jsonl --lines lines.json > counts.csv
    trafficmon eval --tracks tracks.jsonl --truth gt.jsonl > report.json
    trafficmon serve --registry cameras.json --storage ./data

Every subcommand is a pure function of its inputs and flags: the same
invocation writes the same bytes. Exit codes: 0 ok, 1 invalid input,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .anomaly import AnomalyConfig, event_from_json, event_to_json
from .core import BoundingBox, Detection, Track
from .counting import CountingLine, CountTally, count_percentage, counts_to_csv
from .errors import EngineError, ParseError
from .evaluation import (
    build_report,
    confusion_matrix,
    match_frames,
    per_class_f1_scores,
    score_anomalies,
    switch_rate,
)
from .ingest import (
    CameraRecord,
    load_camera_registry,
    parse_detection_log,
    parse_queue_samples,
    serialize_detection_log,
)
from .queues import compute_thresholds, heatmap_to_csv, severity_heatmap
from .service import PipelineConfig, TrafficService, build_app
from .simulator import (
    NoiseConfig,
    generate_scenario,
    inject_noise,
    read_ground_truth,
    render_queue_log,
    scenario_from_dict,
    write_ground_truth,
)
from .tracking import (
    FeatureTracker,
    FeatureTrackerConfig,
    IouTracker,
    IouTrackerConfig,
    dump_tracks,
    run_tracker,
)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tracker", choices=("iou", "feature"), default="iou")
    p.add_argument("--sigma-iou", type=float, default=0.5, help="match gate (iou tracker)")
    p.add_argument("--sigma-l", type=float, default=0.3, help="min score to start a track")
    p.add_argument("--sigma-h", type=float, default=0.5, help="min best score to keep a track")
    p.add_argument("--t-min", type=int, default=2, help="min track length to keep")
    p.add_argument("--max-cosine", type=float, default=0.3, help="appearance gate (feature tracker)")
    p.add_argument("--iou-gate", type=float, default=0.1, help="overlap gate (feature tracker)")
    p.add_argument("--max-age", type=int, default=30, help="frames a lost track survives (feature tracker)")


def _tracker_configs(args) -> tuple[IouTrackerConfig, FeatureTrackerConfig]:
    return (
        IouTrackerConfig(
            sigma_iou=args.sigma_iou, sigma_l=args.sigma_l, sigma_h=args.sigma_h, t_min=args.t_min
        ),
        FeatureTrackerConfig(
            max_cosine_distance=args.max_cosine, iou_gate=args.iou_gate, max_age_frames=args.max_age
        ),
    )


def _frames_by_camera(log_text: str):
    """Parse a detection log and split the frames per camera, preserving order."""
    per_cam: dict[str, list] = {}
    for frame in parse_detection_log(log_text):
        per_cam.setdefault(frame.camera_id, []).append(frame)
    return per_cam


# ---- subcommands -----------------------------------------------------------


def _cmd_simulate(args) -> int:
    doc = json.loads(_read_text(args.config))
    cfg = scenario_from_dict(doc)
    frames, truth = generate_scenario(cfg)
    if cfg.noise != NoiseConfig():
        frames = inject_noise(frames, cfg.noise, seed=(cfg.seed + 1) % 2**64)
    _write_text(args.log_out, serialize_detection_log(frames))
    if args.truth_out:
        _write_text(args.truth_out, write_ground_truth(truth))
    if args.queue_out:
        _write_text(args.queue_out, render_queue_log(truth.queue_samples, as_masks=args.queue_masks))
    return 0


def _cmd_track(args) -> int:
    iou_cfg, feat_cfg = _tracker_configs(args)
    per_cam = _frames_by_camera(_read_text(args.log))
    chunks: list[str] = []
    offset = 0
    for cam in per_cam:
        if args.tracker == "feature":
            tracker = FeatureTracker(feat_cfg)
        else:
            tracker = IouTracker(iou_cfg)
        tracks = run_tracker(tracker, per_cam[cam])
        if offset:
            tracks = [replace(t, track_id=t.track_id + offset) for t in tracks]
        if tracks:
            offset = max(t.track_id for t in tracks)
        chunks.append(dump_tracks(tracks))
    _write_text(args.out, "".join(chunks))
    return 0


def _cmd_queue(args) -> int:
    samples = list(parse_queue_samples(_read_text(args.samples)))
    thresholds = compute_thresholds(
        samples, k=args.k, min_history_days=args.min_history_days, bin_minutes=args.bin_minutes
    )
    doc = {
        "low": thresholds.low,
        "medium": thresholds.medium,
        "high": thresholds.high,
        "k": thresholds.k,
    }
    _write_text(args.thresholds_out, json.dumps(doc, sort_keys=True) + "\n")
    if args.heatmap_out:
        hm = severity_heatmap(samples, thresholds, bin_minutes=args.bin_minutes)
        _write_text(args.heatmap_out, heatmap_to_csv(hm))
    return 0


def _service_over_log(args, road_type: str | None, lines=()) -> TrafficService:
    """Run the full per-camera pipeline over a detection log file."""
    iou_cfg, feat_cfg = _tracker_configs(args)
    anomaly_cfg = AnomalyConfig(
        candidate_speed_px_s=args.speed_threshold,
        candidate_window_s=args.candidate_s,
        confirm_freeway_s=args.confirm_freeway_s,
        confirm_intersection_s=args.confirm_intersection_s,
        intersection_policy=args.intersection_policy,
        merge_radius_px=args.merge_radius,
        one_per_side_window_min=args.merge_window_min,
    )
    service = TrafficService(
        PipelineConfig(
            tracker=args.tracker, iou_tracker=iou_cfg, feature_tracker=feat_cfg, anomaly=anomaly_cfg
        )
    )
    per_cam = _frames_by_camera(_read_text(args.log))
    for cam in per_cam:
        service.register_camera(
            CameraRecord(
                camera_id=cam,
                name=cam,
                frame_rate_fps=10.0,
                road_type_override=road_type,
                counting_lines=tuple(lines),
            )
        )
        service.feed_log(per_cam[cam])
    return service


def _add_anomaly_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--speed-threshold", type=float, default=0.5, help="px/s below which a vehicle is stationary")
    p.add_argument("--candidate-s", type=float, default=15.0)
    p.add_argument("--confirm-freeway-s", type=float, default=30.0)
    p.add_argument("--confirm-intersection-s", type=float, default=60.0)
    p.add_argument("--intersection-policy", choices=("reject", "confirm_60s"), default="reject")
    p.add_argument("--merge-radius", type=float, default=50.0)
    p.add_argument("--merge-window-min", type=float, default=15.0)


def _cmd_anomaly(args) -> int:
    service = _service_over_log(args, args.road_type)
    events = []
    for cam in sorted(service.pipelines):
        pipe = service.pipelines[cam]
        events.extend(pipe.anomaly.events if args.raw else pipe.merged_anomalies())
    events.sort(key=lambda e: (e.start_ts_ms, e.camera_id, e.track_id))
    text = "".join(event_to_json(e) + "\n" for e in events)
    _write_text(args.out, text)
    return 0


def _load_lines(path: str):
    doc = json.loads(_read_text(path))
    if isinstance(doc, dict):
        doc = doc.get("lines", doc.get("counting_lines"))
    if not isinstance(doc, list):
        raise ParseError("lines file must be a JSON array of counting lines")
    try:
        return [
            CountingLine(
                label=cl["label"],
                p1=tuple(float(v) for v in cl["p1"]),
                p2=tuple(float(v) for v in cl["p2"]),
                positive_dir=cl["positive_dir"],
            )
            for cl in doc
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed counting line: {exc}") from None


def _cmd_count(args) -> int:
    lines = _load_lines(args.lines)
    service = _service_over_log(args, road_type=None, lines=lines)
    combined = CountTally()
    for cam in sorted(service.pipelines):
        for ev in service.pipelines[cam].tally.events:
            combined.record(ev)
    _write_text(args.out, counts_to_csv(combined, window_s=args.window))
    return 0


def _load_track_dump(text: str) -> list[Track]:
    dets: dict[int, list[Detection]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            det = Detection(
                frame_index=rec["frame"],
                timestamp_ms=rec["frame"],  # dumps carry no timestamps; metrics only use frames
                class_label=rec["cls"],
                box=BoundingBox(*rec["box"]),
                score=1.0,
            )
            dets.setdefault(rec["track"], []).append(det)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad track dump line: {exc}", line_no) from None
    tracks = []
    for tid in sorted(dets):
        rows = sorted(dets[tid], key=lambda d: d.frame_index)
        tracks.append(Track(track_id=tid, detections=tuple(rows), state="finished"))
    return tracks


def _counts_from_csv(text: str) -> dict[tuple[str, str, str], int]:
    import csv
    import io

    reader = csv.DictReader(io.StringIO(text))
    totals: dict[tuple[str, str, str], int] = {}
    for row in reader:
        try:
            key = (row["line"], row["class"], row["direction"])
            totals[key] = totals.get(key, 0) + int(row["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed counts CSV row: {exc}") from None
    return totals


def _cmd_eval(args) -> int:
    predicted = _load_track_dump(_read_text(args.tracks))
    truth = read_ground_truth(_read_text(args.truth))

    pairs, extra, missed = match_frames(predicted, truth.tracks, iou_min=args.match_iou)
    confusion = confusion_matrix((p.class_label, g.class_label) for p, g in pairs)
    per_class = per_class_f1_scores(pairs, extra, missed)
    rate = switch_rate(predicted, truth.tracks)

    anomaly_score = None
    if args.anomalies:
        events = [
            event_from_json(line)
            for line in _read_text(args.anomalies).splitlines()
            if line.strip()
        ]
        anomaly_score = score_anomalies(events, truth.anomalies, window_s=args.anomaly_window_s)

    percentages = None
    if args.counts:
        detected = _counts_from_csv(_read_text(args.counts))
        truth_total = sum(truth.counts.values())
        percentages = {"overall": count_percentage(sum(detected.values()), truth_total)}
        for key, expected in sorted(truth.counts.items()):
            percentages["|".join(key)] = count_percentage(detected.get(key, 0), expected)

    report = build_report(
        confusion=confusion,
        per_class_f1=per_class,
        track_switch_rate=rate,
        anomaly=anomaly_score,
        count_percentages=percentages,
    )
    _write_text(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    service = TrafficService(storage_root=args.storage)
    for record in load_camera_registry(_read_text(args.registry)):
        service.register_camera(record)
    if args.replay:
        service.feed_log(parse_detection_log(_read_text(args.replay)))
    if args.replay_queue:
        for sample in parse_queue_samples(_read_text(args.replay_queue)):
            service.feed_queue_sample(sample)
    app = build_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficmon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", help="generate a synthetic detection log plus ground truth")
    p.add_argument("--config", required=True, help="scenario JSON ('-' for stdin)")
    p.add_argument("--log-out", default="-", help="detection log destination (default stdout)")
    p.add_argument("--truth-out", help="ground truth destination")
    p.add_argument("--queue-out", help="queue sample log destination")
    p.add_argument("--queue-masks", action="store_true", help="emit queue samples as masks")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("track", help="associate a detection log into tracks")
    p.add_argument("--log", required=True, help="detection log ('-' for stdin)")
    p.add_argument("--out", default="-")
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("queue", help="queue thresholds and severity heatmap from samples")
    p.add_argument("--samples", required=True, help="queue sample log ('-' for stdin)")
    p.add_argument("--k", type=float, default=1.0, help="spread multiplier for the cuts")
    p.add_argument("--min-history-days", type=int, default=7)
    p.add_argument("--bin-minutes", type=int, default=1)
    p.add_argument("--thresholds-out", default="-")
    p.add_argument("--heatmap-out", help="severity grid CSV destination")
    p.set_defaults(func=_cmd_queue)

    p = sub.add_parser("anomaly", help="detect stationary vehicles in a detection log")
    p.add_argument("--log", required=True)
    p.add_argument("--road-type", choices=("freeway", "intersection"), help="skip auto-classification")
    p.add_argument("--raw", action="store_true", help="dump all events, including rejected ones")
    p.add_argument("--out", default="-")
    _add_tracker_flags(p)
    _add_anomaly_flags(p)
    p.set_defaults(func=_cmd_anomaly)

    p = sub.add_parser("count", help="count line crossings per class and direction")
    p.add_argument("--log", required=True)
    p.add_argument("--lines", required=True, help="counting lines JSON")
    p.add_argument("--window", type=int, default=60, help="CSV bucket size, seconds")
    p.add_argument("--out", default="-")
    _add_tracker_flags(p)
    _add_anomaly_flags(p)
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("eval", help="score tracks (and optionally anomalies, counts) against truth")
    p.add_argument("--tracks", required=True, help="track dump to score")
    p.add_argument("--truth", required=True, help="ground truth from simulate")
    p.add_argument("--anomalies", help="anomaly export to score")
    p.add_argument("--counts", help="count CSV to score")
    p.add_argument("--match-iou", type=float, default=0.1, help="min IOU for a detection match")
    p.add_argument("--anomaly-window-s", type=float, default=10.0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the monitoring service HTTP API")
    p.add_argument("--registry", required=True, help="camera registry JSON")
    p.add_argument("--storage", help="aggregate storage directory")
    p.add_argument("--replay", help="detection log to feed before serving")
    p.add_argument("--replay-queue", help="queue sample log to feed before serving")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
