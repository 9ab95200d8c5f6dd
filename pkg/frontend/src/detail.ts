/**
 * Camera detail view: severity heatmap (one row per date, one column per
 * minute of day), hourly count bars, and an anomaly timeline.
 *
 * The heatmap is drawn as one SVG rect per run of consecutive equal
 * severities, so a 7 x 1440 grid stays a handful of nodes while every
 * minute keeps exactly the severity the service reported for it.
 */
import type { AnomalyRecord, CameraStatus, HeatmapDoc, HistoryRecord } from "./api.js";
import { esc, fmtDuration, fmtMinute, fmtTimestamp, weatherIcon } from "./format.js";
import { alertsFor, type ViewState } from "./state.js";

export const DAY_MS = 86_400_000;

export interface SeverityRun {
  /** First minute of day covered by this run (inclusive). */
  start: number;
  /** One past the last minute covered. */
  end: number;
  severity: string | null;
}

/** Collapse one date row of per-minute severities into runs. */
export function rowRuns(cells: (string | null)[]): SeverityRun[] {
  const runs: SeverityRun[] = [];
  for (let i = 0; i < cells.length; i++) {
    const sev = cells[i] ?? null;
    const last = runs[runs.length - 1];
    if (last && last.severity === sev) last.end = i + 1;
    else runs.push({ start: i, end: i + 1, severity: sev });
  }
  return runs;
}

export function heatmapRows(doc: HeatmapDoc): { date: string; runs: SeverityRun[] }[] {
  return doc.dates.map((date, i) => ({ date, runs: rowRuns(doc.cells[i] ?? []) }));
}

/** Epoch window [start, end) the heatmap covers, for aligning the timeline. */
export function heatmapWindow(doc: HeatmapDoc, fallbackNowMs: number): { start: number; end: number } {
  if (doc.dates.length === 0) {
    const end = fallbackNowMs;
    return { start: end - 7 * DAY_MS, end };
  }
  const start = Date.parse(doc.dates[0] + "T00:00:00Z");
  const end = Date.parse(doc.dates[doc.dates.length - 1] + "T00:00:00Z") + DAY_MS;
  return { start, end };
}

/** Mean pixel length per minute timestamp, for the hover readout. */
export function buildPlLookup(records: HistoryRecord[]): Map<number, number> {
  const out = new Map<number, number>();
  for (const r of records) {
    if (r.mean_pl !== null) out.set(r.minute_start_ts, r.mean_pl);
  }
  return out;
}

export interface HourBar {
  hour_start_ts: number;
  total: number;
  perKey: Record<string, number>;
}

/** Crossing totals per hour from hour-resolution history records. */
export function buildHourBars(records: HistoryRecord[]): HourBar[] {
  return records.map((r) => {
    let total = 0;
    for (const n of Object.values(r.counts)) total += n;
    return { hour_start_ts: r.minute_start_ts, total, perKey: r.counts };
  });
}

export interface TimelineMarker {
  record: AnomalyRecord;
  /** Horizontal position in the window, 0..100. */
  leftPct: number;
  open: boolean;
}

export function buildTimeline(
  anomalies: AnomalyRecord[],
  window: { start: number; end: number },
): TimelineMarker[] {
  const span = Math.max(window.end - window.start, 1);
  return anomalies
    .filter((a) => a.end_ts_ms === null || a.end_ts_ms >= window.start)
    .filter((a) => a.start_ts_ms < window.end)
    .map((a) => ({
      record: a,
      leftPct: clamp(((a.start_ts_ms - window.start) / span) * 100, 0, 100),
      open: a.end_ts_ms === null,
    }));
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export interface DetailData {
  status: CameraStatus;
  heatmap: HeatmapDoc;
  /** Hour-resolution history over the heatmap window. */
  hours: HistoryRecord[];
  /** This camera's anomaly records. */
  anomalies: AnomalyRecord[];
}

export function renderDetailHtml(state: ViewState, data: DetailData): string {
  const { status, heatmap } = data;
  const window = heatmapWindow(heatmap, status.last_update_ts ?? Date.now());
  const alerts = alertsFor(state, status.camera_id);
  const weather = weatherIcon(status.weather_tag);
  const parts: string[] = [];

  parts.push(`<div class="detail-head">
  <a href="#/" class="back">&larr; all cameras</a>
  <h2>${esc(status.camera_id)} <span class="cam-name">${esc(status.name)}</span>
    ${weather ? `<span class="weather">${weather}</span>` : ""}</h2>
  <div class="detail-status">
    <span class="sev-badge ${status.queue_severity}">${status.queue_severity}</span>
    <span class="road">${esc(status.road_type)}</span>
    <span>${status.active_anomalies} active anomalies</span>
    ${status.stale ? `<span class="stale-marker">stale</span>` : ""}
    <span class="updated">${status.last_update_ts === null ? "never updated" : "updated " + fmtTimestamp(status.last_update_ts)}</span>
  </div>
</div>`);

  if (alerts.length > 0) {
    const items = alerts
      .map(
        (a) =>
          `<li class="alert-marker-row" data-track="${a.event.track}">` +
          `&#9888; stalled vehicle, track ${a.event.track}, ` +
          `${esc(a.event.direction ?? "?")} at ${fmtTimestamp(a.event.start_ts_ms)}</li>`,
      )
      .join("");
    parts.push(`<ul class="alert-list">${items}</ul>`);
  }

  parts.push(heatmapHtml(heatmap));
  parts.push(barsHtml(buildHourBars(data.hours)));
  parts.push(timelineHtml(buildTimeline(data.anomalies, window), window));
  parts.push(anomalyTableHtml(data.anomalies));
  return parts.join("\n");
}

function heatmapHtml(doc: HeatmapDoc): string {
  if (doc.dates.length === 0) {
    return `<section class="panel heatmap"><h3>queue severity, last 7 days</h3>
<div class="empty-state">no stored history</div></section>`;
  }
  const rows = heatmapRows(doc)
    .map(({ date, runs }) => {
      const rects = runs
        .filter((r) => r.severity !== null)
        .map(
          (r) =>
            `<rect x="${r.start}" y="0" width="${r.end - r.start}" height="10"` +
            ` class="hm-${r.severity}" data-from="${r.start}" data-to="${r.end}">` +
            `<title>${date} ${fmtMinute(r.start)} to ${fmtMinute(r.end - 1)}: ${r.severity}</title></rect>`,
        )
        .join("");
      return `<div class="hm-row" data-date="${date}">
  <span class="hm-date">${date}</span>
  <svg viewBox="0 0 ${doc.bins_per_day} 10" preserveAspectRatio="none" data-date="${date}">${rects}</svg>
</div>`;
    })
    .join("\n");
  return `<section class="panel heatmap"><h3>queue severity, last 7 days</h3>
${rows}
<div class="hm-legend"><span class="hm-chip hm-low"></span>low <span class="hm-chip hm-medium"></span>medium <span class="hm-chip hm-high"></span>high <span class="hm-chip hm-missing"></span>no data</div>
<div class="hm-hover" data-role="pl-readout"></div>
</section>`;
}

function barsHtml(bars: HourBar[]): string {
  if (bars.length === 0) {
    return `<section class="panel bars"><h3>hourly crossings</h3>
<div class="empty-state">no counts recorded</div></section>`;
  }
  const peak = Math.max(...bars.map((b) => b.total), 1);
  const cols = bars
    .map((b) => {
      const pct = (b.total / peak) * 100;
      const breakdown = Object.entries(b.perKey)
        .sort()
        .map(([key, n]) => `${key} ${n}`)
        .join(", ");
      const label = fmtTimestamp(b.hour_start_ts).slice(0, 13) + ":00";
      return (
        `<div class="bar" title="${esc(label)}: ${b.total} crossings${breakdown ? " (" + esc(breakdown) + ")" : ""}">` +
        `<div class="bar-fill" style="height:${pct.toFixed(1)}%"></div></div>`
      );
    })
    .join("");
  return `<section class="panel bars"><h3>hourly crossings</h3>
<div class="bar-row">${cols}</div></section>`;
}

function timelineHtml(markers: TimelineMarker[], window: { start: number; end: number }): string {
  const dots = markers
    .map((m) => {
      const title =
        `track ${m.record.track}, ${m.record.status}` +
        `, started ${fmtTimestamp(m.record.start_ts_ms)}` +
        (m.record.end_ts_ms === null
          ? ", ongoing"
          : `, lasted ${fmtDuration(m.record.end_ts_ms - m.record.start_ts_ms)}`);
      return (
        `<span class="tl-marker${m.open ? " open" : ""}" style="left:${m.leftPct.toFixed(3)}%"` +
        ` data-track="${m.record.track}" title="${esc(title)}"></span>`
      );
    })
    .join("");
  return `<section class="panel timeline"><h3>anomaly timeline</h3>
<div class="tl-track">${dots}</div>
<div class="tl-axis"><span>${fmtTimestamp(window.start)}</span><span>${fmtTimestamp(window.end)}</span></div>
</section>`;
}

function anomalyTableHtml(anomalies: AnomalyRecord[]): string {
  if (anomalies.length === 0) {
    return `<section class="panel"><h3>anomaly events</h3>
<div class="empty-state">no anomaly events</div></section>`;
  }
  const rows = [...anomalies]
    .sort((a, b) => b.start_ts_ms - a.start_ts_ms)
    .map(
      (a) =>
        `<tr data-track="${a.track}"><td>${a.track}</td><td>${esc(a.status)}</td>` +
        `<td>${esc(a.direction ?? "?")}</td><td>${fmtTimestamp(a.start_ts_ms)}</td>` +
        `<td>${a.end_ts_ms === null ? "ongoing" : fmtTimestamp(a.end_ts_ms)}</td>` +
        `<td>(${a.location[0].toFixed(0)}, ${a.location[1].toFixed(0)})</td></tr>`,
    )
    .join("");
  return `<section class="panel"><h3>anomaly events</h3>
<table class="anomaly-table">
<thead><tr><th>track</th><th>status</th><th>dir</th><th>start</th><th>end</th><th>location</th></tr></thead>
<tbody>${rows}</tbody>
</table></section>`;
}
