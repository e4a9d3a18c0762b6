/** Thin typed client over the inference service JSON API. */

export interface BlinkResult {
  image: string;
  s_o: number;
}

export interface GazeResult {
  image: string;
}

export interface HealthResult {
  status: string;
  checkpoints: Record<string, string | null>;
}

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ServiceError(
        payload.error ?? `request failed (${resp.status})`,
        resp.status,
        payload.field,
      );
    }
    return payload as T;
  }

  async health(): Promise<HealthResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/health`);
    return (await resp.json()) as HealthResult;
  }

  blink(image: string, score: number): Promise<BlinkResult> {
    return this.post<BlinkResult>("/blink", { image, score });
  }

  gaze(image: string, dx: number, dy: number, styleImage?: string | null): Promise<GazeResult> {
    const body: Record<string, unknown> = { image, dx, dy };
    if (styleImage) body.style_image = styleImage;
    return this.post<GazeResult>("/gaze", body);
  }

  sample(seed: number, openness?: number): Promise<GazeResult> {
    const body: Record<string, unknown> = { seed };
    if (openness !== undefined) body.openness = openness;
    return this.post<GazeResult>("/sample", body);
  }
}
