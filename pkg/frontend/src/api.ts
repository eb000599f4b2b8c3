import type {
  ApiErrorBody,
  DatasetDoc,
  DivergenceDoc,
  GapsDoc,
  MatrixDoc,
  PlanDoc,
  PlanDraft,
  RecordDoc,
  ResamplePlanDoc,
  ReviewQueueDoc,
  ScoresDoc,
  SnapshotDoc,
} from "./types";

/** Error carrying the service's structured body alongside the HTTP status. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client over the HTTP service. Every displayed number round-trips
 * through one of these calls; the dashboard never recomputes metrics.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly token: string | null = null,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token !== null) headers["Authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let parsed: ApiErrorBody;
      try {
        parsed = (await resp.json()) as ApiErrorBody;
      } catch {
        parsed = { code: "http-error", message: resp.statusText, detail: "" };
      }
      throw new ApiError(resp.status, parsed);
    }
    return (await resp.json()) as T;
  }

  getPlan(): Promise<PlanDoc> {
    return this.request("GET", "/plan");
  }

  savePlan(draft: PlanDraft): Promise<PlanDoc> {
    return this.request("PUT", "/plan", draft);
  }

  validatePlan(): Promise<{ findings: { dimension: string; reason: string }[] }> {
    return this.request("GET", "/plan/validate");
  }

  postRecords(records: RecordDoc[]): Promise<{ accepted: number; rejected: number }> {
    return this.request("POST", "/records", { records });
  }

  snapshot(wave?: number): Promise<SnapshotDoc> {
    const qs = wave === undefined ? "" : `?wave=${wave}`;
    return this.request("GET", `/audit/snapshot${qs}`);
  }

  divergence(wave?: number): Promise<DivergenceDoc> {
    const qs = wave === undefined ? "" : `?wave=${wave}`;
    return this.request("GET", `/audit/divergence${qs}`);
  }

  gaps(dims: string[]): Promise<GapsDoc> {
    return this.request("GET", `/audit/gaps?dims=${encodeURIComponent(dims.join(","))}`);
  }

  scores(name?: string): Promise<ScoresDoc> {
    const qs = name === undefined ? "" : `?name=${encodeURIComponent(name)}`;
    return this.request("GET", `/familiarity/scores${qs}`);
  }

  tail(fraction: number, side: "least" | "most"): Promise<{ ids: string[] }> {
    return this.request("GET", `/familiarity/tail?fraction=${fraction}&side=${side}`);
  }

  review(fraction: number): Promise<ReviewQueueDoc> {
    return this.request("GET", `/review?fraction=${fraction}`);
  }

  setVerdict(id: string, verdict: string): Promise<{ id: string; verdict: string }> {
    return this.request("PUT", `/review/${encodeURIComponent(id)}/verdict`, { verdict });
  }

  buildResample(payload: {
    pool: RecordDoc[];
    k: number;
    name: string;
    strategy?: string;
  }): Promise<ResamplePlanDoc> {
    return this.request("POST", "/resample/build", payload);
  }

  applyResample(name: string): Promise<DatasetDoc> {
    return this.request("POST", "/resample/apply", { name });
  }

  matrix(name: string): Promise<MatrixDoc & { name: string }> {
    return this.request("GET", `/experiments/matrix?name=${encodeURIComponent(name)}`);
  }

  delta(before: string, after: string): Promise<MatrixDoc & { before: string; after: string }> {
    return this.request(
      "GET",
      `/experiments/delta?before=${encodeURIComponent(before)}&after=${encodeURIComponent(after)}`,
    );
  }
}
