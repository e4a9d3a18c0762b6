import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { LatestWins } from "../src/latestWins.js";
import { MAX_UPLOAD_BYTES, PanelController, View } from "../src/panel.js";

class FakeView implements View {
  sources: string[] = [];
  results: Array<{ image: string; s_o: number | null }> = [];
  crosshairs: Array<[number, number]> = [];
  reverts: Array<[number, number]> = [];
  errors: string[] = [];
  showSource(b64: string) { this.sources.push(b64); }
  showResult(b64: string, s_o: number | null) { this.results.push({ image: b64, s_o }); }
  showCrosshair(dx: number, dy: number) { this.crosshairs.push([dx, dy]); }
  revertCrosshair(dx: number, dy: number) { this.reverts.push([dx, dy]); }
  showError(msg: string) { this.errors.push(msg); }
  clearError() {}
}

function fakeApi(overrides: Partial<Record<string, unknown>> = {}): ApiClient {
  const base = {
    sample: vi.fn(async () => ({ image: "src-img" })),
    blink: vi.fn(async (_: string, score: number) => ({ image: `blink-${score}`, s_o: score })),
    gaze: vi.fn(async (_: string, dx: number, dy: number) => ({ image: `gaze-${dx}-${dy}` })),
  };
  return { ...base, ...overrides } as unknown as ApiClient;
}

describe("PanelController", () => {
  it("loads a procedural source on init", async () => {
    const view = new FakeView();
    const controller = new PanelController(fakeApi(), view, new LatestWins(0));
    await controller.init();
    expect(view.sources).toEqual(["src-img"]);
  });

  it("clamps keyboard-driven slider input to [0, 1]", async () => {
    vi.useFakeTimers();
    const api = fakeApi();
    const view = new FakeView();
    const controller = new PanelController(api, view, new LatestWins(0));
    await controller.init();
    controller.onBlinkSlider(3.5);
    await vi.advanceTimersByTimeAsync(10);
    expect((api.blink as any).mock.calls[0][1]).toBe(1);
    vi.useRealTimers();
  });

  it("renders only the latest value in a rapid drag", async () => {
    vi.useFakeTimers();
    const api = fakeApi();
    const view = new FakeView();
    const controller = new PanelController(api, view, new LatestWins(120));
    await controller.init();
    for (const v of [0.9, 0.5, 0.2, 0.0]) {
      controller.onBlinkSlider(v);
      vi.advanceTimersByTime(30);
    }
    await vi.advanceTimersByTimeAsync(300);
    expect((api.blink as any).mock.calls.length).toBe(1);
    expect(view.results).toEqual([{ image: "blink-0", s_o: 0 }]);
    vi.useRealTimers();
  });

  it("hides the score pane for gaze results", async () => {
    vi.useFakeTimers();
    const view = new FakeView();
    const controller = new PanelController(fakeApi(), view, new LatestWins(0));
    await controller.init();
    controller.onGazePad(4, -2);
    await vi.advanceTimersByTimeAsync(10);
    expect(view.results[0].s_o).toBeNull();
    expect(view.crosshairs.at(-1)).toEqual([4, -2]);
    vi.useRealTimers();
  });

  it("includes the style image in gaze requests when set", async () => {
    vi.useFakeTimers();
    const api = fakeApi();
    const view = new FakeView();
    const controller = new PanelController(api, view, new LatestWins(0));
    await controller.init();
    controller.onStyleUpload("style-b64");
    controller.onGazePad(1, 0);
    await vi.advanceTimersByTimeAsync(10);
    expect((api.gaze as any).mock.calls[0][3]).toBe("style-b64");
    vi.useRealTimers();
  });

  it("reverts the crosshair when the service rejects the shift", async () => {
    vi.useFakeTimers();
    const api = fakeApi({
      gaze: vi.fn(async () => {
        throw new Error("bounds");
      }),
    });
    const view = new FakeView();
    const controller = new PanelController(api, view, new LatestWins(0));
    await controller.init();
    controller.onGazePad(9, 9);
    await vi.advanceTimersByTimeAsync(10);
    expect(view.reverts).toEqual([[0, 0]]);
    expect(view.errors.length).toBe(1);
    vi.useRealTimers();
  });

  it("rejects oversized uploads client-side without a request", async () => {
    const api = fakeApi();
    const view = new FakeView();
    const controller = new PanelController(api, view, new LatestWins(0));
    await controller.init();
    const big = new Uint8Array(MAX_UPLOAD_BYTES + 1);
    await controller.onSourceChange({ uploadBytes: big });
    expect(view.errors[0]).toContain("too large");
    expect((api.sample as any).mock.calls.length).toBe(1); // init only
  });

  it("rejects non-PNG uploads", async () => {
    const view = new FakeView();
    const controller = new PanelController(fakeApi(), view, new LatestWins(0));
    await controller.init();
    await controller.onSourceChange({ uploadBytes: new Uint8Array([1, 2, 3, 4, 5]) });
    expect(view.errors[0]).toContain("not a PNG");
  });

  it("same seed twice produces the same source image", async () => {
    const view = new FakeView();
    const controller = new PanelController(fakeApi(), view, new LatestWins(0));
    await controller.init();
    await controller.onSourceChange({ seed: 7 });
    await controller.onSourceChange({ seed: 7 });
    expect(view.sources[1]).toEqual(view.sources[2]);
  });
});
