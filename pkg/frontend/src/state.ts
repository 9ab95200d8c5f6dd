/**
 * Console view state and the pure transitions the UI runs on.
 *
 * All analytics values (severity, anomaly counts, ...) pass through verbatim
 * from the service; the reducers only select, sort and patch.
 */
import type { AnomalyRecord, CameraStatus, QueryResult, QueueSeverity } from "./api.js";

export const SEVERITY_RANK: Record<QueueSeverity, number> = {
  high: 3,
  medium: 2,
  low: 1,
  unknown: 0,
};

export type Connection = "connecting" | "live" | "polling" | "offline";

export interface AlertMarker {
  camera_id: string;
  event: AnomalyRecord;
  received_ms: number;
}

export interface CountTick {
  line: string;
  cls: string;
  dir: string;
  ts_ms: number;
  total: number;
}

export interface ViewState {
  cameras: CameraStatus[];
  /** Active keyword query, empty string when showing the full grid. */
  query: string;
  /** Camera ids the service returned for the query; null = no filter. */
  queryIds: string[] | null;
  queryWarning: string | null;
  selected: string | null;
  alerts: AlertMarker[];
  lastTick: Record<string, CountTick>;
  connection: Connection;
}

const MAX_ALERTS = 50;

export function initialState(): ViewState {
  return {
    cameras: [],
    query: "",
    queryIds: null,
    queryWarning: null,
    selected: null,
    alerts: [],
    lastTick: {},
    connection: "connecting",
  };
}

/** Replace the camera list after a full fetch; selection must stay valid. */
export function applyStatuses(state: ViewState, statuses: CameraStatus[]): ViewState {
  const ids = new Set(statuses.map((s) => s.camera_id));
  return {
    ...state,
    cameras: statuses,
    selected: state.selected !== null && ids.has(state.selected) ? state.selected : null,
  };
}

export function applyQueryResult(state: ViewState, q: string, result: QueryResult): ViewState {
  const byId = new Map(state.cameras.map((s) => [s.camera_id, s]));
  for (const st of result.cameras) byId.set(st.camera_id, st); // results carry fresh statuses
  return {
    ...state,
    cameras: [...byId.values()],
    query: q,
    queryIds: result.cameras.map((s) => s.camera_id),
    queryWarning: result.warning ?? null,
  };
}

export function clearQuery(state: ViewState): ViewState {
  return { ...state, query: "", queryIds: null, queryWarning: null };
}

export function selectCamera(state: ViewState, cameraId: string | null): ViewState {
  if (cameraId !== null && !state.cameras.some((s) => s.camera_id === cameraId)) {
    return state; // invariant: the selected camera exists in the fetched list
  }
  return { ...state, selected: cameraId };
}

export function setConnection(state: ViewState, connection: Connection): ViewState {
  if (state.connection === connection) return state;
  return { ...state, connection };
}

/** Route one event-stream payload into the state. */
export function applyEvent(state: ViewState, event: Record<string, unknown>): ViewState {
  switch (event.type) {
    case "status_delta": {
      const status = event.status as CameraStatus;
      return patchCamera(state, status);
    }
    case "anomaly_alert": {
      const marker: AlertMarker = {
        camera_id: event.camera_id as string,
        event: event.event as AnomalyRecord,
        received_ms: Date.now(),
      };
      const dup = state.alerts.some(
        (a) =>
          a.camera_id === marker.camera_id &&
          a.event.track === marker.event.track &&
          a.event.start_ts_ms === marker.event.start_ts_ms,
      );
      if (dup) return state;
      const alerts = [...state.alerts, marker];
      if (alerts.length > MAX_ALERTS) alerts.splice(0, alerts.length - MAX_ALERTS);
      return { ...state, alerts };
    }
    case "count_tick": {
      const tick: CountTick = {
        line: event.line as string,
        cls: event.cls as string,
        dir: event.dir as string,
        ts_ms: event.ts_ms as number,
        total: event.total as number,
      };
      return {
        ...state,
        lastTick: { ...state.lastTick, [event.camera_id as string]: tick },
      };
    }
    default:
      return state; // future event types pass through harmlessly
  }
}

/** Patch one tile in place (or append a camera we have not seen yet). */
function patchCamera(state: ViewState, status: CameraStatus): ViewState {
  const idx = state.cameras.findIndex((s) => s.camera_id === status.camera_id);
  const cameras = [...state.cameras];
  if (idx >= 0) cameras[idx] = status;
  else cameras.push(status);
  return { ...state, cameras };
}

/** Cameras the grid shows, filtered by query then severity desc, id asc. */
export function visibleCameras(state: ViewState): CameraStatus[] {
  let list = state.cameras;
  if (state.queryIds !== null) {
    const keep = new Set(state.queryIds);
    list = list.filter((s) => keep.has(s.camera_id));
  }
  return [...list].sort((a, b) => {
    const d = SEVERITY_RANK[b.queue_severity] - SEVERITY_RANK[a.queue_severity];
    return d !== 0 ? d : a.camera_id < b.camera_id ? -1 : a.camera_id > b.camera_id ? 1 : 0;
  });
}

export function hasAlert(state: ViewState, cameraId: string): boolean {
  return state.alerts.some((a) => a.camera_id === cameraId);
}

export function alertsFor(state: ViewState, cameraId: string): AlertMarker[] {
  return state.alerts.filter((a) => a.camera_id === cameraId);
}
