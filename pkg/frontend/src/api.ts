/** Thin typed client for the annotation service HTTP API. */

import type { Choice, NextResponse } from "./types.js";

/** Non-2xx response; status 409 means the task was already judged. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface AnnotationApi {
  nextTask(annotator: string): Promise<NextResponse>;
  submitJudgment(annotator: string, taskId: string, choice: Choice): Promise<void>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class HttpAnnotationApi implements AnnotationApi {
  private readonly base: string;

  constructor(
    baseUrl: string,
    sessionId: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.base = `${baseUrl}/session/${encodeURIComponent(sessionId)}`;
  }

  async nextTask(annotator: string): Promise<NextResponse> {
    const resp = await this.fetchFn(
      `${this.base}/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (!resp.ok) {
      throw new ApiError(resp.status, await safeDetail(resp));
    }
    return (await resp.json()) as NextResponse;
  }

  async submitJudgment(annotator: string, taskId: string, choice: Choice): Promise<void> {
    const resp = await this.fetchFn(`${this.base}/judgments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator_id: annotator, task_id: taskId, choice }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, await safeDetail(resp));
    }
  }
}

async function safeDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
