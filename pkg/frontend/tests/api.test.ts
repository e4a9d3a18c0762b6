import { describe, expect, it, vi } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";

function fakeFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as (url: string, init?: RequestInit) => Promise<Response>;
}

describe("ApiClient", () => {
  it("posts blink requests with the expected shape", async () => {
    const impl = fakeFetch(200, { image: "abc", s_o: 0.9 });
    const client = new ApiClient("http://svc", impl);
    const result = await client.blink("imgdata", 0.5);
    expect(result.s_o).toBe(0.9);
    const [url, init] = (impl as any).mock.calls[0];
    expect(url).toBe("http://svc/blink");
    expect(JSON.parse(init.body)).toEqual({ image: "imgdata", score: 0.5 });
  });

  it("omits style_image when not provided", async () => {
    const impl = fakeFetch(200, { image: "x" });
    const client = new ApiClient("http://svc", impl);
    await client.gaze("img", 2, -3);
    const [, init] = (impl as any).mock.calls[0];
    expect(JSON.parse(init.body)).toEqual({ image: "img", dx: 2, dy: -3 });
  });

  it("includes style_image when set", async () => {
    const impl = fakeFetch(200, { image: "x" });
    const client = new ApiClient("http://svc", impl);
    await client.gaze("img", 0, 0, "styledata");
    const [, init] = (impl as any).mock.calls[0];
    expect(JSON.parse(init.body).style_image).toBe("styledata");
  });

  it("maps service errors to ServiceError with the offending field", async () => {
    const impl = fakeFetch(400, { error: "blink score must be in [0, 1]", field: "score" });
    const client = new ApiClient("http://svc", impl);
    await expect(client.blink("img", 2)).rejects.toMatchObject({
      status: 400,
      field: "score",
    });
    await expect(client.blink("img", 2)).rejects.toBeInstanceOf(ServiceError);
  });
});
