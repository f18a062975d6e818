// Typed REST client for the layout service.
//
// Every response body is validated against the schemas in schema.ts before it
// reaches application state.  The fetch function is injectable for tests.

import {
  layoutBatchSchema,
  LayoutDoc,
  layoutSchema,
  RegionInfo,
  regionSchema,
  SessionMeta,
  sessionSchema,
} from "./schema.js";
import { z } from "zod";

const regionListSchema = z.array(regionSchema).min(1);

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string
  ) {
    super(message);
    this.name = "ApiError";
  }
}

const ERROR_HINTS: Record<number, string> = {
  404: "Session or layout not found — it may have expired.",
  409: "The service has no generator checkpoint loaded.",
  422: "The request was rejected — check the uploaded images and region toggles.",
  429: "The service is at its session limit; try again later.",
};

/** Human-readable toast text for an API failure. */
export function errorMessage(err: unknown): string {
  if (err instanceof ApiError) {
    return ERROR_HINTS[err.status] ?? `${err.code}: ${err.message}`;
  }
  if (err instanceof Error && err.name === "AbortError") {
    return "Generation cancelled.";
  }
  return "The layout service is unreachable.";
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) {
    return;
  }
  let code = `http_${res.status}`;
  let message = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") {
      message = body.detail;
    } else if (body.detail?.error) {
      code = body.detail.error;
      message = body.detail.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, code, message);
}

export class StudioClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  async createSession(image: Blob, saliency: Blob): Promise<SessionMeta> {
    const form = new FormData();
    form.append("image", image, "image.png");
    form.append("saliency", saliency, "saliency.png");
    const res = await this.fetchFn(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: form,
    });
    await raiseForStatus(res);
    return sessionSchema.parse(await res.json());
  }

  async getSession(sessionId: string): Promise<SessionMeta> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`);
    await raiseForStatus(res);
    return sessionSchema.parse(await res.json());
  }

  async setRegionEnabled(
    sessionId: string,
    rank: number,
    enabled: boolean
  ): Promise<RegionInfo[]> {
    const res = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/regions/${rank}`,
      {
        method: "PATCH",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ enabled }),
      }
    );
    await raiseForStatus(res);
    return regionListSchema.parse(await res.json());
  }

  async requestLayouts(
    sessionId: string,
    options: { count?: number; seed?: number; signal?: AbortSignal } = {}
  ): Promise<LayoutDoc[]> {
    const body: Record<string, number> = {};
    if (options.count !== undefined) {
      body.count = options.count;
    }
    if (options.seed !== undefined) {
      body.seed = options.seed;
    }
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/layouts`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: options.signal,
    });
    await raiseForStatus(res);
    return layoutBatchSchema.parse(await res.json());
  }

  async getLayout(sessionId: string, index: number): Promise<LayoutDoc> {
    const res = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/layouts/${index}`
    );
    await raiseForStatus(res);
    return layoutSchema.parse(await res.json());
  }

  previewUrl(sessionId: string, index: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/layouts/${index}/preview.png`;
  }
}
