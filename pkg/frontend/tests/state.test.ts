import { describe, expect, it } from "vitest";

import { clampState, defaultState, fromQueryString, GAZE_LIMIT, toQueryString } from "../src/state.js";

describe("panel state", () => {
  it("clamps blink score into [0, 1]", () => {
    expect(clampState({ ...defaultState(), blinkScore: 1.7 }).blinkScore).toBe(1);
    expect(clampState({ ...defaultState(), blinkScore: -0.3 }).blinkScore).toBe(0);
  });

  it("clamps gaze to the service bounds and snaps to integers", () => {
    const s = clampState({ ...defaultState(), gazeDx: 99.7, gazeDy: -99.7 });
    expect(s.gazeDx).toBe(GAZE_LIMIT);
    expect(s.gazeDy).toBe(-GAZE_LIMIT);
    expect(clampState({ ...defaultState(), gazeDx: 3.4 }).gazeDx).toBe(3);
  });

  it("round-trips through the query string", () => {
    const s = clampState({ ...defaultState(), sourceSeed: 42, blinkScore: 0.25, gazeDx: -5, gazeDy: 2 });
    const restored = fromQueryString(toQueryString(s));
    expect(restored.sourceSeed).toBe(42);
    expect(restored.blinkScore).toBeCloseTo(0.25, 3);
    expect(restored.gazeDx).toBe(-5);
    expect(restored.gazeDy).toBe(2);
  });

  it("ignores malformed query values", () => {
    const s = fromQueryString("seed=banana&blink=2.5&dx=oops");
    expect(s.sourceSeed).toBe(defaultState().sourceSeed);
    expect(s.blinkScore).toBe(1);
    expect(s.gazeDx).toBe(0);
  });
});
