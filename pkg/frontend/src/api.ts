import {
  ExportSchema,
  NextTaskResponseSchema,
  ProgressSchema,
  SubmitAckSchema,
  SubmitBodySchema,
  type ExportPayload,
  type Progress,
  type SubmitAck,
  type Task,
} from "./schemas.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Typed client for the review service; every payload is schema-validated. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: unknown };
        if (body.detail !== undefined) detail = JSON.stringify(body.detail);
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return res.json();
  }

  async nextTask(annotatorId: string): Promise<Task | null> {
    const data = await this.request(
      `/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`,
    );
    return NextTaskResponseSchema.parse(data).task;
  }

  async submit(
    taskId: string,
    annotatorId: string,
    answer: unknown,
    durationMs: number,
  ): Promise<SubmitAck> {
    const body = SubmitBodySchema.parse({
      task_id: taskId,
      annotator_id: annotatorId,
      answer,
      duration_ms: durationMs,
    });
    const data = await this.request("/api/responses", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return SubmitAckSchema.parse(data);
  }

  async progress(): Promise<Progress> {
    return ProgressSchema.parse(await this.request("/api/progress"));
  }

  async export(): Promise<ExportPayload> {
    return ExportSchema.parse(await this.request("/api/export"));
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
  }
}
