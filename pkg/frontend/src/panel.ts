/**
 * Controller wiring state, service client, and latest-wins scheduling.
 * DOM-free so the whole interaction logic is unit-testable; the browser
 * bootstrap provides a View implementation over real elements.
 */

import { ApiClient, ServiceError } from "./api.js";
import { DEBOUNCE_MS, LatestWins } from "./latestWins.js";
import { clampState, defaultState, PanelState } from "./state.js";

export interface View {
  showSource(imageB64: string): void;
  showResult(imageB64: string, scoreOut: number | null): void;
  showCrosshair(dx: number, dy: number): void;
  revertCrosshair(dx: number, dy: number): void;
  showError(message: string): void;
  clearError(): void;
}

export const MAX_UPLOAD_BYTES = 1 << 20;

export class PanelController {
  state: PanelState = defaultState();
  private lastAppliedGaze = { dx: 0, dy: 0 };

  constructor(
    private readonly api: ApiClient,
    private readonly view: View,
    private readonly scheduler: LatestWins = new LatestWins(DEBOUNCE_MS),
  ) {}

  private sourceImage: string | null = null;

  private fail(err: unknown): void {
    const msg = err instanceof ServiceError ? err.message : `service unreachable: ${err}`;
    this.view.showError(msg);
  }

  async init(initial?: Partial<PanelState>): Promise<void> {
    this.state = clampState({ ...this.state, ...initial });
    await this.refreshSource();
    if (this.state.blinkScore !== 1) this.onBlinkSlider(this.state.blinkScore);
    if (this.state.gazeDx !== 0 || this.state.gazeDy !== 0) {
      this.onGazePad(this.state.gazeDx, this.state.gazeDy);
    }
  }

  private async refreshSource(): Promise<void> {
    if (this.state.uploadedImage) {
      this.sourceImage = this.state.uploadedImage;
      this.view.showSource(this.sourceImage);
      return;
    }
    try {
      const result = await this.api.sample(this.state.sourceSeed);
      this.sourceImage = result.image;
      this.view.showSource(result.image);
      this.view.clearError();
    } catch (err) {
      this.fail(err);
    }
  }

  onBlinkSlider(raw: number): void {
    const score = Math.min(1, Math.max(0, raw));
    this.state = { ...this.state, blinkScore: score };
    const image = this.sourceImage;
    if (!image) return;
    this.scheduler.schedule(
      "blink",
      () => this.api.blink(image, score),
      (result) => {
        this.view.showResult(result.image, result.s_o);
        this.view.clearError();
      },
      (err) => this.fail(err),
    );
  }

  onGazePad(dxRaw: number, dyRaw: number): void {
    const next = clampState({ ...this.state, gazeDx: dxRaw, gazeDy: dyRaw });
    this.state = next;
    this.view.showCrosshair(next.gazeDx, next.gazeDy);
    const image = this.sourceImage;
    if (!image) return;
    this.scheduler.schedule(
      "gaze",
      () => this.api.gaze(image, next.gazeDx, next.gazeDy, this.state.styleImage),
      (result) => {
        // the gaze endpoint has no score pane: hide it by passing null
        this.view.showResult(result.image, null);
        this.lastAppliedGaze = { dx: next.gazeDx, dy: next.gazeDy };
        this.view.clearError();
      },
      (err) => {
        this.view.revertCrosshair(this.lastAppliedGaze.dx, this.lastAppliedGaze.dy);
        this.fail(err);
      },
    );
  }

  async onSourceChange(selection: { seed?: number; uploadBytes?: Uint8Array; uploadB64?: string }): Promise<void> {
    if (selection.uploadBytes !== undefined || selection.uploadB64 !== undefined) {
      const size = selection.uploadBytes?.length ?? Math.floor((selection.uploadB64!.length * 3) / 4);
      if (size > MAX_UPLOAD_BYTES) {
        this.view.showError(`upload too large (${size} bytes, max ${MAX_UPLOAD_BYTES})`);
        return;
      }
      const b64 = selection.uploadB64 ?? bytesToBase64(selection.uploadBytes!);
      if (!looksLikePng(selection.uploadBytes)) {
        this.view.showError("not a PNG image");
        return;
      }
      this.state = { ...this.state, uploadedImage: b64 };
    } else if (selection.seed !== undefined) {
      this.state = clampState({ ...this.state, sourceSeed: selection.seed, uploadedImage: null });
    }
    await this.refreshSource();
  }

  onStyleUpload(b64: string | null): void {
    this.state = { ...this.state, styleImage: b64 };
  }
}

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47];

export function looksLikePng(bytes?: Uint8Array): boolean {
  if (!bytes) return true; // pre-encoded uploads are validated server-side
  return bytes.length >= 4 && PNG_MAGIC.every((v, i) => bytes[i] === v);
}
