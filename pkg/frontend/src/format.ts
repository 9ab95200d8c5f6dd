/** Small display helpers shared by the grid and detail views. */

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Epoch ms to "yyyy-mm-dd hh:mm:ss" in UTC, matching the service's day math. */
export function fmtTimestamp(tsMs: number): string {
  return new Date(tsMs).toISOString().replace("T", " ").slice(0, 19);
}

/** Minute of day to "hh:mm". */
export function fmtMinute(minute: number): string {
  const h = Math.floor(minute / 60);
  const m = minute % 60;
  return `${String(h).padStart(2, "0")}:${String(m).padStart(2, "0")}`;
}

export function fmtDuration(ms: number): string {
  const s = Math.round(ms / 1000);
  if (s < 60) return `${s}s`;
  if (s < 3600) return `${Math.floor(s / 60)}m ${s % 60}s`;
  return `${Math.floor(s / 3600)}h ${Math.floor((s % 3600) / 60)}m`;
}

const WEATHER_ICON: Record<string, string> = {
  clear: "☀",
  rain: "\u{1F327}",
  snow: "❄",
};

export function weatherIcon(tag: string | null): string {
  if (!tag) return "";
  return WEATHER_ICON[tag] ?? tag;
}
