/**
 * Panel state: a single serializable record every control round-trips
 * through. Reloading the page with the serialized query string restores
 * the same view after one request cycle.
 */

export interface PanelState {
  sourceSeed: number;
  uploadedImage: string | null; // base64 PNG; wins over sourceSeed when set
  blinkScore: number;
  gazeDx: number;
  gazeDy: number;
  styleImage: string | null;
}

export const GAZE_LIMIT = 24;

export function defaultState(): PanelState {
  return {
    sourceSeed: 1,
    uploadedImage: null,
    blinkScore: 1,
    gazeDx: 0,
    gazeDy: 0,
    styleImage: null,
  };
}

export function clampState(s: PanelState): PanelState {
  return {
    ...s,
    blinkScore: Math.min(1, Math.max(0, s.blinkScore)),
    gazeDx: Math.round(Math.min(GAZE_LIMIT, Math.max(-GAZE_LIMIT, s.gazeDx))),
    gazeDy: Math.round(Math.min(GAZE_LIMIT, Math.max(-GAZE_LIMIT, s.gazeDy))),
    sourceSeed: Math.max(0, Math.floor(s.sourceSeed)),
  };
}

/** Serialize the shareable part of the state (images excluded). */
export function toQueryString(s: PanelState): string {
  const q = new URLSearchParams();
  q.set("seed", String(s.sourceSeed));
  q.set("blink", s.blinkScore.toFixed(3));
  q.set("dx", String(s.gazeDx));
  q.set("dy", String(s.gazeDy));
  return q.toString();
}

export function fromQueryString(query: string): PanelState {
  const q = new URLSearchParams(query);
  const base = defaultState();
  const num = (key: string, fallback: number) => {
    const raw = q.get(key);
    const v = raw === null ? NaN : Number(raw);
    return Number.isFinite(v) ? v : fallback;
  };
  return clampState({
    ...base,
    sourceSeed: num("seed", base.sourceSeed),
    blinkScore: num("blink", base.blinkScore),
    gazeDx: num("dx", base.gazeDx),
    gazeDy: num("dy", base.gazeDy),
  });
}
