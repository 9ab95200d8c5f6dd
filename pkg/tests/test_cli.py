"""End-to-end exercises of the command line entry points.

Each test drives main() in-process with a real argv list; the serve smoke
test additionally spawns the module as a subprocess and talks HTTP to it.
"""
from __future__ import annotations

import io
import json
import socket
import subprocess
import sys
import time
from collections import Counter

import httpx
import pytest
from fastapi.testclient import TestClient

from trafficmon.cli import main
from trafficmon.ingest import parse_detection_log, parse_queue_samples
from trafficmon.queues import compute_thresholds, heatmap_to_csv, severity_heatmap
from trafficmon.simulator import read_ground_truth
from trafficmon.tracking import IouTracker, IouTrackerConfig, dump_tracks, run_tracker


def run_cli(argv, capsys):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def lane(y=100.0, rates=None, speed=100.0, length=1000.0):
    return {
        "points": [[0.0, y], [length, y]],
        "direction": "E",
        "speed_px_s": speed,
        "spawn_rates": {"car": 30.0} if rates is None else rates,
    }


def traffic_doc(seed=11, duration_s=30.0, **extra):
    doc = {
        "seed": seed,
        "duration_s": duration_s,
        "lanes": [lane()],
        "counting_lines": [
            {"label": "mid", "p1": [500.0, 0.0], "p2": [500.0, 200.0], "positive_dir": "W"}
        ],
    }
    doc.update(extra)
    return doc


def stall_doc(seed=3, duration_s=60.0, start_s=12.0, stall_len=48.0):
    # a single dedicated vehicle stalls mid-lane; no background traffic
    doc = traffic_doc(seed=seed, duration_s=duration_s)
    doc["lanes"] = [lane(rates={})]
    doc["stalls"] = [{"lane": 0, "start_s": start_s, "duration_s": stall_len}]
    return doc


def queue_doc(days=8):
    return {
        "seed": 5,
        "duration_s": days * 86400.0,
        "camera_id": "cam-q",
        "queue_profile": {"period_s": 3600.0, "base_pl": 40.0, "peaks": [[420, 540, 90.0]]},
    }


def write_json(path, doc):
    path.write_text(json.dumps(doc) + "\n")
    return str(path)


def simulate(tmp_path, doc, stem="scn", truth=False, queue=False, masks=False):
    """Run the simulate subcommand against a config doc; returns the log path."""
    cfg = write_json(tmp_path / f"{stem}.json", doc)
    log = tmp_path / f"{stem}.log.jsonl"
    argv = ["simulate", "--config", cfg, "--log-out", str(log)]
    if truth:
        argv += ["--truth-out", str(tmp_path / f"{stem}.truth.jsonl")]
    if queue:
        argv += ["--queue-out", str(tmp_path / f"{stem}.queue.jsonl")]
    if masks:
        argv.append("--queue-masks")
    assert main(argv) == 0
    return log


class TestEntryDispatch:
    def test_no_command_prints_usage(self, capsys):
        code, _, err = run_cli([], capsys)
        assert code == 2
        assert err.startswith("usage:")

    def test_unknown_command_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_required_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["track"])
        assert exc.value.code == 2

    def test_missing_input_file(self, tmp_path, capsys):
        code, _, err = run_cli(["track", "--log", str(tmp_path / "nope.jsonl")], capsys)
        assert code == 1
        assert err.startswith("error:")

    def test_invalid_json_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{")
        code, _, err = run_cli(["simulate", "--config", str(cfg)], capsys)
        assert code == 1
        assert err.startswith("error: invalid JSON:")

    def test_bad_scenario_key(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "cfg.json", {"seed": 1, "duration_s": 5, "speed": 9})
        code, _, err = run_cli(["simulate", "--config", cfg], capsys)
        assert code == 1
        assert "unknown scenario keys: speed" in err

    def test_malformed_log_line(self, tmp_path, capsys):
        log = tmp_path / "junk.jsonl"
        log.write_text("not json\n")
        code, _, err = run_cli(["track", "--log", str(log)], capsys)
        assert code == 1
        assert err.startswith("error:")


class TestSimulate:
    def test_writes_log_truth_and_queue(self, tmp_path):
        doc = traffic_doc()
        doc["queue_profile"] = {"period_s": 10.0, "base_pl": 40.0}
        log = simulate(tmp_path, doc, truth=True, queue=True)

        frames = list(parse_detection_log(log.read_text()))
        assert frames and frames[0].camera_id == "cam-1"
        truth = read_ground_truth((tmp_path / "scn.truth.jsonl").read_text())
        assert len(truth.tracks) >= 5
        samples = list(parse_queue_samples((tmp_path / "scn.queue.jsonl").read_text()))
        assert len(samples) == 3
        assert [s.pixel_length for s in samples[:2]] == [40.0, 40.0]

    def test_log_to_stdout_by_default(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "cfg.json", traffic_doc(duration_s=5.0))
        code, out, _ = run_cli(["simulate", "--config", cfg], capsys)
        assert code == 0
        assert list(parse_detection_log(out))

    def test_config_from_stdin(self, tmp_path, capsys, monkeypatch):
        doc = traffic_doc(duration_s=5.0)
        file_log = simulate(tmp_path, doc)
        monkeypatch.setattr("sys.stdin", io.StringIO(json.dumps(doc)))
        code, out, _ = run_cli(["simulate", "--config", "-"], capsys)
        assert code == 0
        assert out == file_log.read_text()

    def test_rerun_is_byte_identical(self, tmp_path):
        doc = traffic_doc()
        a = simulate(tmp_path, doc, stem="a", truth=True)
        b = simulate(tmp_path, doc, stem="b", truth=True)
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.truth.jsonl").read_bytes() == (tmp_path / "b.truth.jsonl").read_bytes()

    def test_noise_changes_log_deterministically(self, tmp_path):
        clean = simulate(tmp_path, traffic_doc(), stem="clean")
        noisy = traffic_doc(noise={"center_jitter_sigma_px": 1.0, "dropout_prob": 0.1})
        n1 = simulate(tmp_path, noisy, stem="n1")
        n2 = simulate(tmp_path, noisy, stem="n2")
        assert n1.read_bytes() != clean.read_bytes()
        assert n1.read_bytes() == n2.read_bytes()

    def test_queue_masks_flag(self, tmp_path):
        doc = {
            "seed": 2,
            "duration_s": 120.0,
            "queue_profile": {"period_s": 30.0, "base_pl": 40.0},
        }
        simulate(tmp_path, doc, queue=True, masks=True)
        text = (tmp_path / "scn.queue.jsonl").read_text()
        assert '"mask"' in text
        assert all(s.pixel_length == 40.0 for s in parse_queue_samples(text))


class TestTrack:
    def test_matches_in_process_tracker(self, tmp_path, capsys):
        log = simulate(tmp_path, traffic_doc())
        code, out, _ = run_cli(["track", "--log", str(log)], capsys)
        assert code == 0
        frames = parse_detection_log(log.read_text())
        expected = dump_tracks(run_tracker(IouTracker(IouTrackerConfig()), frames))
        assert out == expected

    def test_two_cameras_get_disjoint_ids(self, tmp_path, capsys):
        log_a = simulate(tmp_path, traffic_doc(seed=11, camera_id="cam-a"), stem="a")
        log_b = simulate(tmp_path, traffic_doc(seed=12, camera_id="cam-b"), stem="b")
        merged = tmp_path / "merged.jsonl"
        merged.write_text(log_a.read_text() + log_b.read_text())

        code, out, _ = run_cli(["track", "--log", str(merged)], capsys)
        assert code == 0
        rows = [json.loads(l) for l in out.splitlines()]
        tracks_a = run_tracker(IouTracker(IouTrackerConfig()), parse_detection_log(log_a.read_text()))
        n_a = max(t.track_id for t in tracks_a)
        ids = {r["track"] for r in rows}
        assert min(ids) == 1
        assert max(ids) > n_a
        # cam-b rows sit strictly above the cam-a id range
        first_b = next(i for i, r in enumerate(rows) if r["track"] > n_a)
        assert all(r["track"] <= n_a for r in rows[:first_b])
        assert all(r["track"] > n_a for r in rows[first_b:])

    def test_feature_tracker_needs_embeddings(self, tmp_path, capsys):
        log = simulate(tmp_path, traffic_doc(duration_s=5.0))
        code, _, err = run_cli(["track", "--log", str(log), "--tracker", "feature"], capsys)
        assert code == 1
        assert "embedding" in err

    def test_feature_tracker_on_embedding_log(self, tmp_path, capsys):
        doc = traffic_doc(duration_s=10.0, emit_embeddings=True, embedding_dim=8)
        log = simulate(tmp_path, doc)
        code, out, _ = run_cli(["track", "--log", str(log), "--tracker", "feature"], capsys)
        assert code == 0
        assert out and all("track" in json.loads(l) for l in out.splitlines())

    def test_sigma_h_filters_everything(self, tmp_path, capsys):
        # simulated scores top out at 0.95, so nothing clears 0.99
        log = simulate(tmp_path, traffic_doc(duration_s=10.0))
        code, out, _ = run_cli(["track", "--log", str(log), "--sigma-h", "0.99"], capsys)
        assert code == 0
        assert out == ""

    def test_stdin_to_stdout(self, tmp_path, capsys, monkeypatch):
        log = simulate(tmp_path, traffic_doc(duration_s=10.0))
        code, via_file, _ = run_cli(["track", "--log", str(log)], capsys)
        assert code == 0
        monkeypatch.setattr("sys.stdin", io.StringIO(log.read_text()))
        code, via_stdin, _ = run_cli(["track", "--log", "-"], capsys)
        assert code == 0
        assert via_stdin == via_file


class TestQueue:
    def queue_log(self, tmp_path, days=8):
        simulate(tmp_path, queue_doc(days=days), stem=f"q{days}", queue=True)
        return tmp_path / f"q{days}.queue.jsonl"

    def test_thresholds_match_library(self, tmp_path, capsys):
        qlog = self.queue_log(tmp_path)
        code, out, _ = run_cli(["queue", "--samples", str(qlog)], capsys)
        assert code == 0
        samples = list(parse_queue_samples(qlog.read_text()))
        th = compute_thresholds(samples, k=1.0)
        assert json.loads(out) == {"low": th.low, "medium": th.medium, "high": th.high, "k": 1.0}

    def test_k_zero_pins_cuts_to_base(self, tmp_path, capsys):
        qlog = self.queue_log(tmp_path)
        code, out, _ = run_cli(["queue", "--samples", str(qlog), "--k", "0"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["low"] == doc["medium"] == doc["high"] == 90.0

    def test_heatmap_csv(self, tmp_path, capsys):
        qlog = self.queue_log(tmp_path)
        hm_path = tmp_path / "hm.csv"
        code, _, _ = run_cli(
            ["queue", "--samples", str(qlog), "--bin-minutes", "60",
             "--heatmap-out", str(hm_path), "--thresholds-out", str(tmp_path / "th.json")],
            capsys,
        )
        assert code == 0
        samples = list(parse_queue_samples(qlog.read_text()))
        th = compute_thresholds(samples, k=1.0, bin_minutes=60)
        assert hm_path.read_text() == heatmap_to_csv(severity_heatmap(samples, th, bin_minutes=60))
        header, *rows = hm_path.read_text().splitlines()
        assert header.startswith("date,00:00,01:00")
        assert len(rows) == 8 and all(len(r.split(",")) == 25 for r in rows)

    def test_insufficient_history(self, tmp_path, capsys):
        qlog = self.queue_log(tmp_path, days=3)
        code, _, err = run_cli(["queue", "--samples", str(qlog)], capsys)
        assert code == 1
        assert "history covers 3 day(s)" in err

    def test_min_history_days_flag(self, tmp_path, capsys):
        qlog = self.queue_log(tmp_path, days=3)
        code, out, _ = run_cli(
            ["queue", "--samples", str(qlog), "--min-history-days", "3"], capsys
        )
        assert code == 0
        assert set(json.loads(out)) == {"low", "medium", "high", "k"}


class TestAnomaly:
    def test_freeway_stall_confirmed(self, tmp_path, capsys):
        log = simulate(tmp_path, stall_doc())
        code, out, _ = run_cli(
            ["anomaly", "--log", str(log), "--road-type", "freeway"], capsys
        )
        assert code == 0
        events = [json.loads(l) for l in out.splitlines()]
        assert len(events) == 1
        ev = events[0]
        assert ev["status"] == "confirmed"
        assert ev["cam"] == "cam-1"
        assert ev["direction"] == "E"
        assert 12_000 <= ev["start_ts_ms"] <= 15_000
        assert ev["end_ts_ms"] is not None

    def test_raw_keeps_frozen_rejections(self, tmp_path, capsys):
        doc = traffic_doc(seed=6, duration_s=40.0, frozen_windows=[[10.0, 25.0]])
        log = simulate(tmp_path, doc)
        code, raw_out, _ = run_cli(
            ["anomaly", "--log", str(log), "--road-type", "freeway", "--raw"], capsys
        )
        assert code == 0
        raw = [json.loads(l) for l in raw_out.splitlines()]
        assert any(e["rejection_reason"] == "frozen_frame" for e in raw)

        code, merged_out, _ = run_cli(
            ["anomaly", "--log", str(log), "--road-type", "freeway"], capsys
        )
        assert code == 0
        merged = [json.loads(l) for l in merged_out.splitlines()]
        assert all(e["rejection_reason"] != "frozen_frame" for e in merged)

    def test_intersection_default_rejects(self, tmp_path, capsys):
        log = simulate(tmp_path, stall_doc())
        code, out, _ = run_cli(
            ["anomaly", "--log", str(log), "--road-type", "intersection"], capsys
        )
        assert code == 0
        events = [json.loads(l) for l in out.splitlines()]
        assert events
        assert all(e["status"] != "confirmed" for e in events)

    def test_intersection_confirm_policy(self, tmp_path, capsys):
        # 80 s stall comfortably clears the one-minute confirmation hold
        log = simulate(tmp_path, stall_doc(duration_s=95.0, stall_len=80.0))
        code, out, _ = run_cli(
            ["anomaly", "--log", str(log), "--road-type", "intersection",
             "--intersection-policy", "confirm_60s"],
            capsys,
        )
        assert code == 0
        events = [json.loads(l) for l in out.splitlines()]
        assert any(e["status"] == "confirmed" for e in events)


class TestCount:
    def lines_file(self, tmp_path, doc, as_dict=False):
        lines = doc["counting_lines"]
        payload = {"lines": lines} if as_dict else lines
        return write_json(tmp_path / ("lines_dict.json" if as_dict else "lines.json"), payload)

    def test_counts_match_truth(self, tmp_path, capsys):
        doc = traffic_doc()
        log = simulate(tmp_path, doc, truth=True)
        code, out, _ = run_cli(
            ["count", "--log", str(log), "--lines", self.lines_file(tmp_path, doc)], capsys
        )
        assert code == 0
        header, *rows = out.splitlines()
        assert header == "line,class,direction,window_start_s,count"
        tallied: Counter = Counter()
        for row in rows:
            line, cls, direction, _, n = row.split(",")
            tallied[(line, cls, direction)] += int(n)
        truth = read_ground_truth((tmp_path / "scn.truth.jsonl").read_text())
        assert truth.counts and tallied == Counter(truth.counts)

    def test_dict_lines_form_equivalent(self, tmp_path, capsys):
        doc = traffic_doc(duration_s=10.0)
        log = simulate(tmp_path, doc)
        code, out_a, _ = run_cli(
            ["count", "--log", str(log), "--lines", self.lines_file(tmp_path, doc)], capsys
        )
        code_b, out_b, _ = run_cli(
            ["count", "--log", str(log), "--lines", self.lines_file(tmp_path, doc, as_dict=True)],
            capsys,
        )
        assert (code, code_b) == (0, 0)
        assert out_a == out_b

    def test_window_folds_buckets(self, tmp_path, capsys):
        doc = traffic_doc()
        log = simulate(tmp_path, doc)
        code, out, _ = run_cli(
            ["count", "--log", str(log), "--lines", self.lines_file(tmp_path, doc),
             "--window", "3600"],
            capsys,
        )
        assert code == 0
        rows = out.splitlines()[1:]
        assert len(rows) == 1
        line, cls, direction, start, _ = rows[0].split(",")
        assert (line, cls, direction, start) == ("mid", "car", "E", "0")

    def test_malformed_lines_file(self, tmp_path, capsys):
        log = simulate(tmp_path, traffic_doc(duration_s=5.0))
        bad = write_json(tmp_path / "bad_lines.json", {"lines": 5})
        code, _, err = run_cli(["count", "--log", str(log), "--lines", bad], capsys)
        assert code == 1
        assert "lines file must be a JSON array" in err


class TestEval:
    def full_pipeline(self, tmp_path, capsys):
        """simulate -> track -> anomaly -> count, returning paths for eval."""
        doc = stall_doc(seed=9)
        doc["lanes"].append(lane(y=300.0, rates={"car": 20.0}))
        doc["counting_lines"][0]["p2"] = [500.0, 400.0]
        log = simulate(tmp_path, doc, truth=True)
        truth = tmp_path / "scn.truth.jsonl"

        tracks = tmp_path / "tracks.jsonl"
        assert main(["track", "--log", str(log), "--out", str(tracks)]) == 0
        anomalies = tmp_path / "anomalies.jsonl"
        assert main(["anomaly", "--log", str(log), "--road-type", "freeway",
                     "--out", str(anomalies)]) == 0
        counts = tmp_path / "counts.csv"
        lines = write_json(tmp_path / "lines.json", doc["counting_lines"])
        assert main(["count", "--log", str(log), "--lines", lines,
                     "--out", str(counts)]) == 0
        capsys.readouterr()
        return log, truth, tracks, anomalies, counts

    def test_full_report(self, tmp_path, capsys):
        _, truth, tracks, anomalies, counts = self.full_pipeline(tmp_path, capsys)
        code, out, _ = run_cli(
            ["eval", "--tracks", str(tracks), "--truth", str(truth),
             "--anomalies", str(anomalies), "--counts", str(counts)],
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert set(report) == {"confusion", "per_class_f1", "switch_rate", "anomaly", "counts"}
        assert report["switch_rate"] == 0.0
        assert report["per_class_f1"]["car"] >= 0.99
        assert report["anomaly"]["f1"] == 1.0
        assert report["anomaly"]["rmse"] <= 10.0
        assert report["counts"]["overall"] == 100.0
        assert out == json.dumps(report, indent=2, sort_keys=True) + "\n"

    def test_track_only_report(self, tmp_path, capsys):
        _, truth, tracks, _, _ = self.full_pipeline(tmp_path, capsys)
        code, out, _ = run_cli(
            ["eval", "--tracks", str(tracks), "--truth", str(truth)], capsys
        )
        assert code == 0
        assert set(json.loads(out)) == {"confusion", "per_class_f1", "switch_rate"}


class TestServe:
    def registry_file(self, tmp_path, camera_id="cam-1"):
        return write_json(
            tmp_path / "registry.json",
            [{"camera_id": camera_id, "name": "Gate", "frame_rate_fps": 10.0,
              "road_type_override": "freeway"}],
        )

    def test_wires_replay_into_app(self, tmp_path, capsys, monkeypatch):
        log = simulate(tmp_path, stall_doc())
        captured = {}

        def fake_run(app, **kwargs):
            captured["app"] = app
            captured.update(kwargs)

        monkeypatch.setattr("uvicorn.run", fake_run)
        code, _, _ = run_cli(
            ["serve", "--registry", self.registry_file(tmp_path),
             "--replay", str(log), "--port", "8123"],
            capsys,
        )
        assert code == 0
        assert captured["host"] == "127.0.0.1" and captured["port"] == 8123

        client = TestClient(captured["app"])
        cams = client.get("/cameras").json()
        assert [c["camera_id"] for c in cams] == ["cam-1"]
        events = client.get("/anomalies").json()
        assert len(events) == 1 and events[0]["status"] == "confirmed"

    def test_replay_queue_feeds_samples(self, tmp_path, capsys, monkeypatch):
        simulate(tmp_path, queue_doc(days=1), stem="q1", queue=True)
        captured = {}
        monkeypatch.setattr("uvicorn.run", lambda app, **kw: captured.update(app=app))
        code, _, _ = run_cli(
            ["serve", "--registry", self.registry_file(tmp_path, camera_id="cam-q"),
             "--replay-queue", str(tmp_path / "q1.queue.jsonl")],
            capsys,
        )
        assert code == 0
        status = TestClient(captured["app"]).get("/cameras/cam-q/status").json()
        assert status["last_update_ts"] == 23 * 3600 * 1000
        assert status["queue_severity"] == "unknown"

    def test_subprocess_smoke(self, tmp_path):
        log = simulate(tmp_path, stall_doc())
        registry = self.registry_file(tmp_path)
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]

        proc = subprocess.Popen(
            [sys.executable, "-m", "trafficmon.cli", "serve",
             "--registry", registry, "--replay", str(log), "--port", str(port)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            base = f"http://127.0.0.1:{port}"
            deadline = time.monotonic() + 20.0
            while True:
                try:
                    cams = httpx.get(f"{base}/cameras", timeout=2.0).json()
                    break
                except httpx.HTTPError:
                    assert proc.poll() is None, "server exited before answering"
                    assert time.monotonic() < deadline, "server never came up"
                    time.sleep(0.1)
            assert [c["camera_id"] for c in cams] == ["cam-1"]
            events = httpx.get(f"{base}/anomalies", timeout=2.0).json()
            assert [e["status"] for e in events] == ["confirmed"]
        finally:
            proc.terminate()
            proc.wait(timeout=10)
