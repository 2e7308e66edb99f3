/** Typed client for the segmentation service. All numerical work stays
 * server-side; this layer only moves documents. */

export interface CriteriaInfo {
  criteria: string[];
  dimension_of: Record<string, string>;
  dimensions: string[];
}

export interface MatrixConsistency {
  ci: number;
  cr: number;
}

export interface WeightsResponse {
  weights: Record<string, number>;
  consistency_index: number;
  consistency_ratio: number;
  consistent: boolean;
  dimension_weights: Record<string, number>;
  per_matrix_consistency: Record<string, MatrixConsistency>;
  dimension_totals: Record<string, number> | null;
}

export interface StageStatus {
  name: string;
  status: string;
  fingerprint: string | null;
  seconds: number | null;
  reused: boolean;
}

export interface RunManifest {
  run_id: string;
  status: string;
  failed_stage: string | null;
  error: string | null;
  data_id: string;
  config: Record<string, unknown>;
  stages: StageStatus[];
}

export interface SnakeData {
  features: string[];
  segments: Array<{ segment: string; values: number[] }>;
}

export interface ContingencyData {
  rows: string[];
  columns: string[];
  counts: number[][];
}

export interface ReportTables {
  grid: Array<Record<string, unknown>>;
  reallocation: Array<Record<string, unknown>>;
  contingency_vs_t: ContingencyData;
  contingency_vs_s: ContingencyData;
  segment_means: Array<Record<string, number | string>>;
  snake: SnakeData;
  transition: { matrix: number[][]; counts: number[][]; uniform_rows: number[] };
}

export interface WeightsRequest {
  mode: "hierarchical" | "flat";
  dimension_order?: string[];
  dimension_matrix?: number[][];
  criterion_matrices?: Record<string, { criteria: string[]; matrix: number[][] }>;
  criteria?: string[];
  matrix?: number[][];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

/** The service could not be reached at all (as opposed to rejecting). */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = "OfflineError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new OfflineError(err);
    }
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.text();
        detail = body || detail;
      } catch {
        /* body unreadable; keep the status */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<{ status: string }> {
    return this.request("/api/health");
  }

  criteria(): Promise<CriteriaInfo> {
    return this.request("/api/criteria");
  }

  uploadData(csv: string): Promise<{ data_id: string; bytes: number }> {
    return this.post("/api/data", { csv });
  }

  computeWeights(payload: WeightsRequest): Promise<WeightsResponse> {
    return this.post("/api/weights", payload);
  }

  launchRun(dataId: string, config: Record<string, unknown>): Promise<{ run_id: string }> {
    return this.post("/api/runs", { data_id: dataId, config });
  }

  runStatus(runId: string): Promise<RunManifest> {
    return this.request(`/api/runs/${runId}`);
  }

  rerun(runId: string, config: Record<string, unknown>): Promise<{ run_id: string }> {
    return this.post(`/api/runs/${runId}/rerun`, { config });
  }

  stageOutput<T = Record<string, unknown>>(runId: string, stage: string): Promise<T> {
    return this.request(`/api/runs/${runId}/output/${stage}`);
  }

  report(runId: string): Promise<ReportTables> {
    return this.request(`/api/runs/${runId}/report`);
  }
}
