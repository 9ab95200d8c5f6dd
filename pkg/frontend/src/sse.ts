/**
 * Server-sent events client for GET /events.
 *
 * The service frames events as "event: <type>\ndata: <json>\n\n" and sends
 * ": keepalive" comment lines when idle. EventSource would also work in the
 * browser, but a fetch/ReadableStream reader keeps the parser testable in
 * node and lets us reuse one code path everywhere.
 */

export interface SseFrame {
  event: string;
  data: string;
}

/** Incremental parser; feed it chunks, get back completed frames. */
export class SseParser {
  private buf = "";

  push(chunk: string): SseFrame[] {
    this.buf += chunk.replace(/\r\n/g, "\n");
    const frames: SseFrame[] = [];
    let sep;
    while ((sep = this.buf.indexOf("\n\n")) >= 0) {
      const block = this.buf.slice(0, sep);
      this.buf = this.buf.slice(sep + 2);
      const frame = parseBlock(block);
      if (frame) frames.push(frame);
    }
    return frames;
  }
}

function parseBlock(block: string): SseFrame | null {
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (!line || line.startsWith(":")) continue; // comments and blanks
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "event") event = value;
    else if (field === "data") data.push(value);
    // id/retry fields are not used by this service
  }
  if (data.length === 0) return null;
  return { event, data: data.join("\n") };
}

export type StreamPhase = "connecting" | "live" | "down";

export interface SubscribeOptions {
  onEvent: (event: Record<string, unknown>) => void;
  onPhase?: (phase: StreamPhase) => void;
  fetchFn?: typeof fetch;
  /** Initial reconnect delay; doubles per failure up to 10x. */
  retryMs?: number;
}

export interface Subscription {
  stop(): void;
}

/** Subscribe to the event stream with automatic reconnect. */
export function subscribeEvents(baseUrl: string, opts: SubscribeOptions): Subscription {
  const fetchFn = opts.fetchFn ?? globalThis.fetch;
  const baseRetry = opts.retryMs ?? 500;
  const control = new AbortController();
  let stopped = false;

  const run = async () => {
    let retry = baseRetry;
    while (!stopped) {
      opts.onPhase?.("connecting");
      try {
        const res = await fetchFn(baseUrl + "/events", {
          signal: control.signal,
          headers: { accept: "text/event-stream" },
        });
        if (!res.ok || !res.body) throw new Error(`stream rejected: ${res.status}`);
        opts.onPhase?.("live");
        retry = baseRetry;
        const reader = res.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
            let payload: Record<string, unknown>;
            try {
              payload = JSON.parse(frame.data);
            } catch {
              continue; // garbled frame, wait for the next one
            }
            opts.onEvent(payload);
          }
        }
      } catch {
        // fall through to reconnect
      }
      if (stopped) break;
      opts.onPhase?.("down");
      await sleep(retry);
      retry = Math.min(retry * 2, baseRetry * 10);
    }
  };
  void run();

  return {
    stop() {
      stopped = true;
      control.abort();
    },
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
