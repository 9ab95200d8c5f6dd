import { describe, expect, it } from "vitest";

import { SseParser, subscribeEvents } from "../src/sse.js";

describe("SseParser", () => {
  it("parses a complete frame", () => {
    const p = new SseParser();
    const frames = p.push('event: count_tick\ndata: {"total":3}\n\n');
    expect(frames).toEqual([{ event: "count_tick", data: '{"total":3}' }]);
  });

  it("buffers frames split across arbitrary chunk boundaries", () => {
    const wire = 'event: anomaly_alert\ndata: {"camera_id":"cam-1"}\n\nevent: status_delta\ndata: {}\n\n';
    for (let cut = 1; cut < wire.length - 1; cut++) {
      const p = new SseParser();
      const frames = [...p.push(wire.slice(0, cut)), ...p.push(wire.slice(cut))];
      expect(frames.map((f) => f.event)).toEqual(["anomaly_alert", "status_delta"]);
      expect(frames[0]!.data).toBe('{"camera_id":"cam-1"}');
    }
  });

  it("returns several frames from one chunk", () => {
    const p = new SseParser();
    const frames = p.push("data: 1\n\ndata: 2\n\ndata: 3\n\n");
    expect(frames.map((f) => f.data)).toEqual(["1", "2", "3"]);
    expect(frames.map((f) => f.event)).toEqual(["message", "message", "message"]);
  });

  it("ignores keepalive comments", () => {
    const p = new SseParser();
    expect(p.push(": keepalive\n\n")).toEqual([]);
    expect(p.push(": keepalive\n\nevent: x\ndata: y\n\n")).toEqual([{ event: "x", data: "y" }]);
  });

  it("joins multiple data lines with newlines", () => {
    const p = new SseParser();
    expect(p.push("data: a\ndata: b\n\n")).toEqual([{ event: "message", data: "a\nb" }]);
  });

  it("tolerates crlf line endings", () => {
    const p = new SseParser();
    expect(p.push("event: e\r\ndata: d\r\n\r\n")).toEqual([{ event: "e", data: "d" }]);
  });

  it("holds an incomplete frame until the separator arrives", () => {
    const p = new SseParser();
    expect(p.push("event: e\ndata: d\n")).toEqual([]);
    expect(p.push("\n")).toEqual([{ event: "e", data: "d" }]);
  });
});

function streamResponse(chunks: string[]): Response {
  const enc = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const c of chunks) controller.enqueue(enc.encode(c));
      controller.close();
    },
  });
  return new Response(body, { status: 200, headers: { "content-type": "text/event-stream" } });
}

/** Serve the chunks on the first connect, then leave reconnects pending. */
function serveOnce(chunks: string[], sawUrl?: (url: string) => void): typeof fetch {
  let served = false;
  return async (url) => {
    sawUrl?.(String(url));
    if (served) return new Promise<Response>(() => {});
    served = true;
    return streamResponse(chunks);
  };
}

describe("subscribeEvents", () => {
  it("decodes frames from a streamed response and parses the JSON", async () => {
    const seen: Record<string, unknown>[] = [];
    let requested = "";
    const sub = subscribeEvents("http://svc", {
      onEvent: (e) => seen.push(e),
      retryMs: 5,
      fetchFn: serveOnce(
        [
          'event: count_tick\ndata: {"type":"count_tick","total":1}\n\n',
          ": keepalive\n\n",
          'event: anomaly_alert\ndata: {"type":"anomaly_alert","camera_id":"c"}\n\n',
        ],
        (url) => {
          requested = url;
        },
      ),
    });
    await new Promise((r) => setTimeout(r, 30));
    sub.stop();
    expect(requested).toBe("http://svc/events");
    expect(seen.map((e) => e.type)).toEqual(["count_tick", "anomaly_alert"]);
  });

  it("reconnects after the stream ends and reports phases", async () => {
    const phases: string[] = [];
    let calls = 0;
    const sub = subscribeEvents("http://svc", {
      onEvent: () => {},
      onPhase: (p) => phases.push(p),
      retryMs: 5,
      fetchFn: async () => {
        calls++;
        return streamResponse(["data: {}\n\n"]);
      },
    });
    await new Promise((r) => setTimeout(r, 60));
    sub.stop();
    expect(calls).toBeGreaterThan(1);
    expect(phases[0]).toBe("connecting");
    expect(phases).toContain("live");
    expect(phases).toContain("down");
  });

  it("skips frames whose payload is not valid JSON", async () => {
    const seen: Record<string, unknown>[] = [];
    const sub = subscribeEvents("http://svc", {
      onEvent: (e) => seen.push(e),
      retryMs: 5,
      fetchFn: serveOnce(["data: not json\n\n", 'data: {"ok":true}\n\n']),
    });
    await new Promise((r) => setTimeout(r, 30));
    sub.stop();
    expect(seen).toEqual([{ ok: true }]);
  });
});
