/**
 * Typed client for the monitoring service HTTP API.
 *
 * Every shape here mirrors the JSON the service emits; the console never
 * invents or re-derives analytics, it just fetches and displays.
 */

export type QueueSeverity = "unknown" | "low" | "medium" | "high";

export interface CameraStatus {
  camera_id: string;
  name: string;
  last_update_ts: number | null;
  queue_severity: QueueSeverity;
  active_anomalies: number;
  counts_last_hour: Record<string, number>;
  weather_tag: string | null;
  road_type: string;
  stale: boolean;
}

export interface AnomalyRecord {
  cam: string;
  track: number;
  location: [number, number];
  direction: string | null;
  start_ts_ms: number;
  end_ts_ms: number | null;
  status: string;
  rejection_reason: string | null;
}

/** Severity grid: one row per date, one cell per minute of day (null = no data). */
export interface HeatmapDoc {
  camera_id: string;
  dates: string[];
  bins_per_day: number;
  cells: (QueueSeverity | null)[][];
}

/** Stored per-minute aggregate; counts are keyed "line|class|direction". */
export interface HistoryRecord {
  type: "aggregate";
  cam: string;
  minute_start_ts: number;
  mean_pl: number | null;
  severity: QueueSeverity | null;
  counts: Record<string, number>;
  anomaly_refs: string[];
  resolution?: "hour";
}

export interface QueryResult {
  cameras: CameraStatus[];
  warning?: string;
}

export interface CameraRegistration {
  camera_id: string;
  name: string;
  frame_rate_fps: number;
  road_type_override?: string | null;
  weather_tag?: string | null;
  location?: [number, number] | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(status === 0 ? detail : `HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function asApiError(res: Response): Promise<ApiError> {
  let detail = res.statusText || "request failed";
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(res.status, detail);
}

export class Client {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = globalThis.fetch,
  ) {}

  private async get<T>(path: string, signal?: AbortSignal): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, { signal });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) throw await asApiError(res);
    return (await res.json()) as T;
  }

  listCameras(signal?: AbortSignal): Promise<CameraStatus[]> {
    return this.get("/cameras", signal);
  }

  cameraStatus(cameraId: string, signal?: AbortSignal): Promise<CameraStatus> {
    return this.get(`/cameras/${encodeURIComponent(cameraId)}/status`, signal);
  }

  async registerCamera(body: CameraRegistration): Promise<CameraStatus> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + "/cameras", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) throw await asApiError(res);
    return (await res.json()) as CameraStatus;
  }

  history(
    cameraId: string,
    opts: { from?: number; to?: number; resolution?: "minute" | "hour" } = {},
    signal?: AbortSignal,
  ): Promise<HistoryRecord[]> {
    const params = new URLSearchParams();
    if (opts.from !== undefined) params.set("from", String(opts.from));
    if (opts.to !== undefined) params.set("to", String(opts.to));
    if (opts.resolution) params.set("resolution", opts.resolution);
    const qs = params.toString();
    return this.get(
      `/cameras/${encodeURIComponent(cameraId)}/history${qs ? "?" + qs : ""}`,
      signal,
    );
  }

  heatmap(cameraId: string, days = 7, signal?: AbortSignal): Promise<HeatmapDoc> {
    return this.get(`/cameras/${encodeURIComponent(cameraId)}/heatmap?days=${days}`, signal);
  }

  anomalies(active?: boolean, signal?: AbortSignal): Promise<AnomalyRecord[]> {
    const qs = active === undefined ? "" : `?active=${active}`;
    return this.get(`/anomalies${qs}`, signal);
  }

  query(q: string, signal?: AbortSignal): Promise<QueryResult> {
    return this.get(`/query?q=${encodeURIComponent(q)}`, signal);
  }
}
