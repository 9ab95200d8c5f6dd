/**
 * Camera grid view: one tile per camera with severity badge, anomaly and
 * stale markers, weather icon and last-hour counts. Renders to an HTML
 * string so the whole view stays testable without a browser.
 */
import type { CameraStatus } from "./api.js";
import { esc, fmtTimestamp, weatherIcon } from "./format.js";
import { hasAlert, visibleCameras, type ViewState } from "./state.js";

export function renderGridHtml(state: ViewState): string {
  const parts: string[] = [];

  if (state.connection === "offline") {
    parts.push(
      `<div class="banner offline">service unreachable, showing last known data</div>`,
    );
  } else if (state.connection === "polling") {
    parts.push(`<div class="banner polling">event stream down, polling for updates</div>`);
  }

  if (state.queryWarning) {
    parts.push(`<div class="query-note warning">${esc(state.queryWarning)}</div>`);
  } else if (state.query) {
    parts.push(
      `<div class="query-note">showing cameras matching <b>${esc(state.query)}</b>` +
        ` <a href="#" data-action="clear-query">clear</a></div>`,
    );
  }

  const cameras = visibleCameras(state);
  if (state.cameras.length === 0) {
    parts.push(`<div class="empty-state">no cameras registered</div>`);
  } else if (cameras.length === 0) {
    parts.push(`<div class="empty-state">no matches</div>`);
  } else {
    const tiles = cameras.map((st) => tileHtml(st, hasAlert(state, st.camera_id)));
    parts.push(`<div class="grid">${tiles.join("")}</div>`);
  }
  return parts.join("\n");
}

function tileHtml(st: CameraStatus, alerted: boolean): string {
  const classes = ["tile", `sev-${st.queue_severity}`];
  if (st.stale) classes.push("stale");
  const counts = Object.entries(st.counts_last_hour)
    .sort()
    .map(([cls, n]) => `${esc(cls)} ${n}`)
    .join(", ");
  const markers: string[] = [];
  if (alerted) markers.push(`<span class="alert-marker" title="new anomaly alert">&#9888;</span>`);
  if (st.active_anomalies > 0) {
    markers.push(`<span class="anomaly-count">${st.active_anomalies} active</span>`);
  }
  if (st.stale) markers.push(`<span class="stale-marker">stale</span>`);
  const weather = weatherIcon(st.weather_tag);
  return (
    `<a class="${classes.join(" ")}" data-cam="${esc(st.camera_id)}"` +
    ` href="#/camera/${encodeURIComponent(st.camera_id)}">` +
    `<div class="tile-head">` +
    `<span class="cam-id">${esc(st.camera_id)}</span>` +
    `<span class="sev-badge ${st.queue_severity}">${st.queue_severity}</span>` +
    `</div>` +
    `<div class="cam-name">${esc(st.name)}${weather ? ` <span class="weather">${weather}</span>` : ""}</div>` +
    `<div class="tile-markers">${markers.join("")}</div>` +
    `<div class="tile-foot">` +
    `<span class="road">${esc(st.road_type)}</span>` +
    `<span class="counts">${counts || "no crossings this hour"}</span>` +
    `<span class="updated">${st.last_update_ts === null ? "never updated" : fmtTimestamp(st.last_update_ts)}</span>` +
    `</div>` +
    `</a>`
  );
}
