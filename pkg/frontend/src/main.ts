/**
 * Browser wiring: routes, fetch scheduling and event-stream subscription.
 * All rendering and state logic lives in the pure modules next door.
 */
import { ApiError, Client } from "./api.js";
import type { DetailData } from "./detail.js";
import { buildPlLookup, heatmapWindow, renderDetailHtml } from "./detail.js";
import { fmtMinute } from "./format.js";
import { renderGridHtml } from "./grid.js";
import { subscribeEvents } from "./sse.js";
import {
  applyEvent,
  applyQueryResult,
  applyStatuses,
  clearQuery,
  initialState,
  selectCamera,
  setConnection,
  type ViewState,
} from "./state.js";

// same-origin by default; ?api=http://host:port points at a proxied service
const apiBase = new URLSearchParams(location.search).get("api") ?? location.origin;
const client = new Client(apiBase);
let state: ViewState = initialState();
let detail: DetailData | null = null;
let detailAbort: AbortController | null = null;
let pollTimer: number | null = null;

const view = document.getElementById("view") as HTMLElement;
const dot = document.getElementById("conn-dot") as HTMLElement;
const searchForm = document.getElementById("search-form") as HTMLFormElement;
const searchBox = document.getElementById("search-box") as HTMLInputElement;
const registerForm = document.getElementById("register-form") as HTMLFormElement;
const registerNote = document.getElementById("register-note") as HTMLElement;

function routeCamera(): string | null {
  const m = location.hash.match(/^#\/camera\/(.+)$/);
  return m?.[1] ? decodeURIComponent(m[1]) : null;
}

function render(): void {
  dot.className = `dot ${state.connection}`;
  dot.title = state.connection;
  if (state.selected !== null && detail !== null) {
    view.innerHTML = renderDetailHtml(state, detail);
    wireHeatmapHover();
  } else {
    view.innerHTML = renderGridHtml(state);
  }
}

async function refresh(): Promise<void> {
  try {
    const statuses = await client.listCameras();
    state = applyStatuses(state, statuses);
    if (state.connection === "offline") state = setConnection(state, "polling");
  } catch (err) {
    if (err instanceof ApiError && err.status === 0) {
      state = setConnection(state, "offline"); // keep last known data on screen
    }
  }
  render();
}

async function openDetail(cameraId: string): Promise<void> {
  detailAbort?.abort(); // cancel-on-navigate
  const control = new AbortController();
  detailAbort = control;
  try {
    const status = await client.cameraStatus(cameraId, control.signal);
    state = applyStatuses(
      state,
      state.cameras.some((c) => c.camera_id === cameraId)
        ? state.cameras.map((c) => (c.camera_id === cameraId ? status : c))
        : [...state.cameras, status],
    );
    state = selectCamera(state, cameraId);
    const heatmap = await client.heatmap(cameraId, 7, control.signal);
    const window = heatmapWindow(heatmap, status.last_update_ts ?? Date.now());
    const [hours, minutes, anomalies] = await Promise.all([
      client.history(cameraId, { from: window.start, to: window.end, resolution: "hour" }, control.signal),
      client.history(cameraId, { from: window.start, to: window.end, resolution: "minute" }, control.signal),
      client.anomalies(undefined, control.signal),
    ]);
    if (control.signal.aborted) return;
    detail = {
      status,
      heatmap,
      hours,
      anomalies: anomalies.filter((a) => a.cam === cameraId),
    };
    plByMinute = buildPlLookup(minutes);
    render();
  } catch (err) {
    if (control.signal.aborted) return;
    if (err instanceof ApiError && err.status === 404) {
      view.innerHTML = `<div class="empty-state">unknown camera: ${cameraId.replace(/[<>&"]/g, "")}</div>`;
      return;
    }
    if (err instanceof ApiError && err.status === 0) {
      state = setConnection(state, "offline");
      render();
      return;
    }
    throw err;
  }
}

let plByMinute = new Map<number, number>();

/** Pointer readout: minute under the cursor with its severity and mean PL. */
function wireHeatmapHover(): void {
  const readout = view.querySelector('[data-role="pl-readout"]') as HTMLElement | null;
  if (!readout || !detail) return;
  for (const svg of view.querySelectorAll<SVGSVGElement>(".hm-row svg")) {
    const date = svg.dataset.date ?? "";
    const dayStart = Date.parse(date + "T00:00:00Z");
    const row = detail.heatmap.dates.indexOf(date);
    const cells = detail.heatmap.cells[row] ?? [];
    svg.addEventListener("mousemove", (ev) => {
      const rect = svg.getBoundingClientRect();
      const minute = Math.min(
        1439,
        Math.max(0, Math.floor(((ev.clientX - rect.left) / rect.width) * 1440)),
      );
      const sev = cells[minute] ?? "no data";
      const pl = plByMinute.get(dayStart + minute * 60_000);
      readout.textContent =
        `${date} ${fmtMinute(minute)}: ${sev}` +
        (pl !== undefined ? `, mean queue length ${pl.toFixed(1)} px` : "");
    });
    svg.addEventListener("mouseleave", () => {
      readout.textContent = "";
    });
  }
}

async function route(): Promise<void> {
  const cam = routeCamera();
  if (cam === null) {
    detailAbort?.abort();
    detail = null;
    state = selectCamera(state, null);
    render();
    await refresh();
  } else {
    await openDetail(cam);
  }
}

searchForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const q = searchBox.value.trim();
  void (async () => {
    if (!q) {
      state = clearQuery(state);
      render();
      return;
    }
    try {
      const result = await client.query(q);
      state = applyQueryResult(state, q, result);
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) state = setConnection(state, "offline");
    }
    render();
  })();
});

view.addEventListener("click", (ev) => {
  const target = (ev.target as HTMLElement).closest('[data-action="clear-query"]');
  if (target) {
    ev.preventDefault();
    searchBox.value = "";
    state = clearQuery(state);
    render();
  }
});

registerForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const data = new FormData(registerForm);
  void (async () => {
    try {
      await client.registerCamera({
        camera_id: String(data.get("camera_id") ?? ""),
        name: String(data.get("name") ?? ""),
        frame_rate_fps: Number(data.get("fps") ?? 10),
        road_type_override: String(data.get("road_type") ?? "") || null,
        weather_tag: String(data.get("weather") ?? "") || null,
      });
      registerNote.textContent = "camera registered";
      registerForm.reset();
      await refresh();
    } catch (err) {
      registerNote.textContent = err instanceof ApiError ? err.detail : String(err);
    }
  })();
});

subscribeEvents(apiBase, {
  onEvent(event) {
    state = applyEvent(state, event);
    // a delta for the open camera refreshes its header without a reload
    if (detail && event.camera_id === detail.status.camera_id && event.type === "status_delta") {
      const status = state.cameras.find((c) => c.camera_id === detail!.status.camera_id);
      if (status) detail = { ...detail, status };
    }
    render();
  },
  onPhase(phase) {
    if (phase === "live") {
      state = setConnection(state, "live");
      if (pollTimer !== null) {
        clearInterval(pollTimer);
        pollTimer = null;
      }
      void refresh();
    } else if (phase === "down") {
      state = setConnection(state, state.connection === "offline" ? "offline" : "polling");
      if (pollTimer === null) {
        pollTimer = setInterval(() => void refresh(), 5000) as unknown as number;
      }
    }
    render();
  },
});

window.addEventListener("hashchange", () => void route());
void route();
