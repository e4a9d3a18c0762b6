/** Browser bootstrap: bind the controller to the static page. */

import { ApiClient } from "./api.js";
import { PanelController, View } from "./panel.js";
import { fromQueryString, GAZE_LIMIT, toQueryString } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

function makeView(): View {
  const source = el<HTMLImageElement>("source-image");
  const result = el<HTMLImageElement>("result-image");
  const scorePane = el<HTMLElement>("score-pane");
  const scoreOut = el<HTMLElement>("score-out");
  const errorBox = el<HTMLElement>("error-box");
  const crosshair = el<HTMLElement>("crosshair");

  const placeCrosshair = (dx: number, dy: number) => {
    const pad = el<HTMLElement>("gaze-pad");
    const half = pad.clientWidth / 2;
    crosshair.style.left = `${half + (dx / GAZE_LIMIT) * half - 5}px`;
    crosshair.style.top = `${half + (dy / GAZE_LIMIT) * half - 5}px`;
  };

  return {
    showSource: (b64) => {
      source.src = pngSrc(b64);
    },
    showResult: (b64, s_o) => {
      result.src = pngSrc(b64);
      if (s_o === null) {
        scorePane.style.display = "none";
      } else {
        scorePane.style.display = "";
        scoreOut.textContent = s_o.toFixed(3);
      }
    },
    showCrosshair: placeCrosshair,
    revertCrosshair: placeCrosshair,
    showError: (msg) => {
      errorBox.textContent = msg;
      errorBox.style.display = "";
    },
    clearError: () => {
      errorBox.style.display = "none";
    },
  };
}

function serviceUrl(): string {
  const q = new URLSearchParams(window.location.search);
  return q.get("service") ?? "http://127.0.0.1:8787";
}

async function boot(): Promise<void> {
  const api = new ApiClient(serviceUrl());
  const controller = new PanelController(api, makeView());
  await controller.init(fromQueryString(window.location.search));

  const slider = el<HTMLInputElement>("blink-slider");
  slider.value = String(controller.state.blinkScore);
  slider.addEventListener("input", () => controller.onBlinkSlider(Number(slider.value)));

  const seedInput = el<HTMLInputElement>("seed-input");
  seedInput.value = String(controller.state.sourceSeed);
  el<HTMLButtonElement>("seed-button").addEventListener("click", () => {
    void controller.onSourceChange({ seed: Number(seedInput.value) });
  });

  const pad = el<HTMLElement>("gaze-pad");
  const padHandler = (ev: MouseEvent) => {
    const rect = pad.getBoundingClientRect();
    const half = rect.width / 2;
    const dx = ((ev.clientX - rect.left - half) / half) * GAZE_LIMIT;
    const dy = ((ev.clientY - rect.top - half) / half) * GAZE_LIMIT;
    controller.onGazePad(dx, dy);
    history.replaceState(null, "", `?${toQueryString(controller.state)}`);
  };
  let dragging = false;
  pad.addEventListener("mousedown", (ev) => {
    dragging = true;
    padHandler(ev);
  });
  window.addEventListener("mousemove", (ev) => {
    if (dragging) padHandler(ev);
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });

  slider.addEventListener("change", () => {
    history.replaceState(null, "", `?${toQueryString(controller.state)}`);
  });

  el<HTMLInputElement>("upload-input").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    await controller.onSourceChange({ uploadBytes: bytes });
  });

  el<HTMLInputElement>("style-input").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) {
      controller.onStyleUpload(null);
      return;
    }
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    for (const b of bytes) binary += String.fromCharCode(b);
    controller.onStyleUpload(btoa(binary));
  });
}

void boot();
