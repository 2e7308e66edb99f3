/** Fetch-level mock of the segmentation service, faithful to the
 * documented endpoint schemas: the weights endpoint really computes the
 * principal-eigenvector weights and consistency ratios, and reruns reuse
 * every stage except consensus and report when only consensus weights
 * change. */

const RANDOM_INDEX = [0, 0, 0.58, 0.9, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];
const STAGE_NAMES = [
  "ingest",
  "features",
  "weights",
  "distances",
  "cluster",
  "stability",
  "consensus",
  "report",
];
const STAGE_SECONDS = [0.8, 0.3, 0.01, 24.0, 1.4, 3.7, 0.05, 0.01];

export const CRITERIA = {
  criteria: [
    "recency", "frequency", "ltm_frequency", "volume", "avg_volume",
    "product_mix", "loyalty", "sales", "avg_profit", "profit_margin",
  ],
  dimension_of: {
    recency: "RFM", frequency: "RFM", sales: "RFM",
    product_mix: "Growth", volume: "Growth", avg_profit: "Growth", ltm_frequency: "Growth",
    loyalty: "Stability", avg_volume: "Stability", profit_margin: "Stability",
  } as Record<string, string>,
  dimensions: ["RFM", "Growth", "Stability"],
};

export const REPORT_FIXTURE = {
  grid: [
    { method: "spectral", measure: "cid", k: 4, silhouette: 0.712, calinski_harabasz: 252.31 },
  ],
  reallocation: [
    { segment: "C1", time_series: 681, stability: 847, final: 763 },
    { segment: "C2", time_series: 877, stability: 879, final: 815 },
    { segment: "C3", time_series: 992, stability: 850, final: 956 },
    { segment: "C4", time_series: 908, stability: 882, final: 924 },
  ],
  contingency_vs_t: {
    rows: ["C1", "C2", "C3", "C4"],
    columns: ["C1", "C2", "C3", "C4"],
    counts: [
      [665, 71, 0, 27],
      [4, 799, 12, 0],
      [0, 0, 951, 5],
      [12, 7, 29, 876],
    ],
  },
  contingency_vs_s: {
    rows: ["C1", "C2", "C3", "C4"],
    columns: ["C1", "C2", "C3", "C4"],
    counts: [
      [749, 0, 0, 14],
      [98, 704, 13, 0],
      [0, 175, 781, 0],
      [0, 0, 56, 868],
    ],
  },
  segment_means: [
    { segment: "C1", count: 763, recency: 2.06, sales: 197563.97, loyalty: 1.24 },
    { segment: "C2", count: 815, recency: 0.5, sales: 351592.16, loyalty: 2.36 },
    { segment: "C3", count: 956, recency: 88.84, sales: 3034.72, loyalty: 0.57 },
    { segment: "C4", count: 924, recency: 29.4, sales: 34570.06, loyalty: 2.21 },
  ],
  snake: {
    features: ["recency", "frequency", "sales", "loyalty"],
    segments: [
      { segment: "C1", values: [0.02, 0.91, 0.56, 0.43] },
      { segment: "C2", values: [0.0, 0.12, 1.0, 0.98] },
      { segment: "C3", values: [1.0, 0.13, 0.0, 0.0] },
      { segment: "C4", values: [0.33, 0.26, 0.1, 0.9] },
    ],
  },
  transition: {
    matrix: [
      [0.9, 0.05, 0.03, 0.02],
      [0.04, 0.88, 0.05, 0.03],
      [0.02, 0.06, 0.85, 0.07],
      [0.01, 0.02, 0.05, 0.92],
    ],
    counts: [
      [900, 50, 30, 20],
      [40, 880, 50, 30],
      [20, 60, 850, 70],
      [10, 20, 50, 920],
    ],
    uniform_rows: [],
  },
};

function principalWeights(matrix: number[][]): { weights: number[]; ci: number; cr: number } {
  const m = matrix.length;
  if (m === 1) return { weights: [1], ci: 0, cr: 0 };
  let v = Array(m).fill(1 / m);
  let lambda = m;
  for (let iter = 0; iter < 10000; iter++) {
    const av = matrix.map((row) => row.reduce((acc, a, j) => acc + a * v[j], 0));
    lambda = av.reduce((a, b) => a + b, 0);
    const next = av.map((x) => x / lambda);
    const delta = Math.max(...next.map((x, i) => Math.abs(x - v[i])));
    v = next;
    if (delta < 1e-12) break;
  }
  const ci = Math.max(0, (lambda - m) / (m - 1));
  const ri = RANDOM_INDEX[m - 1] ?? 1.49;
  return { weights: v, ci, cr: ri > 0 ? ci / ri : 0 };
}

interface RunRecord {
  manifest: Record<string, unknown>;
  pollsUntilDone: number;
}

export class MockService {
  log: Array<{ method: string; path: string; body?: unknown }> = [];
  offline = false;
  private runs = new Map<string, RunRecord>();
  private runCounter = 0;
  private dataCounter = 0;
  /** how many status polls a fresh run stays "running" */
  pollsBeforeDone = 0;

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = input;
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.log.push({ method, path, body });
    if (this.offline) {
      throw new TypeError("NetworkError: connection refused");
    }
    return this.route(method, path, body);
  };

  private json(payload: unknown, status = 200): Response {
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private route(method: string, path: string, body: any): Response {
    if (path === "/api/criteria") return this.json(CRITERIA);
    if (path === "/api/health") return this.json({ status: "ok" });
    if (path === "/api/data" && method === "POST") {
      if (!body.csv) return this.json({ detail: [{ loc: ["body", "csv"] }] }, 422);
      this.dataCounter += 1;
      return this.json({ data_id: `d${this.dataCounter}`, bytes: body.csv.length });
    }
    if (path === "/api/weights" && method === "POST") {
      return this.weights(body);
    }
    if (path === "/api/runs" && method === "POST") {
      return this.json({ run_id: this.newRun(false) });
    }
    const rerun = path.match(/^\/api\/runs\/([^/]+)\/rerun$/);
    if (rerun && method === "POST") {
      const keys = Object.keys(body.config ?? {});
      const consensusOnly = keys.every((k) => ["w_t", "w_s", "resolution"].includes(k));
      return this.json({ run_id: this.newRun(consensusOnly) });
    }
    const report = path.match(/^\/api\/runs\/([^/]+)\/report$/);
    if (report) {
      if (!this.runs.has(report[1])) return this.json({ detail: { error: "unknown run" } }, 404);
      return this.json(REPORT_FIXTURE);
    }
    const output = path.match(/^\/api\/runs\/([^/]+)\/output\/([^/]+)$/);
    if (output) {
      return this.json({ stage: output[2] });
    }
    const status = path.match(/^\/api\/runs\/([^/]+)$/);
    if (status) {
      const run = this.runs.get(status[1]);
      if (!run) return this.json({ detail: { error: "unknown run" } }, 404);
      return this.json(this.snapshot(run));
    }
    return this.json({ detail: { error: `no route ${method} ${path}` } }, 404);
  }

  private weights(body: any): Response {
    const perMatrix: Record<string, { ci: number; cr: number }> = {};
    const dims: string[] = body.dimension_order ?? CRITERIA.dimensions;
    if (body.mode === "flat") {
      const { weights, ci, cr } = principalWeights(body.matrix);
      const names: string[] = body.criteria ?? CRITERIA.criteria;
      return this.json({
        weights: Object.fromEntries(names.map((n, i) => [n, weights[i]])),
        consistency_index: ci,
        consistency_ratio: cr,
        consistent: cr <= 0.1,
        dimension_weights: {},
        per_matrix_consistency: { flat: { ci, cr } },
        dimension_totals: null,
      });
    }
    const dimMatrix =
      body.dimension_matrix ?? dims.map(() => dims.map(() => 1));
    const dimResult = principalWeights(dimMatrix);
    perMatrix["dimensions"] = { ci: dimResult.ci, cr: dimResult.cr };
    const weights: Record<string, number> = {};
    const totals: Record<string, number> = {};
    dims.forEach((dim, d) => {
      const entry = (body.criterion_matrices ?? {})[dim];
      const names: string[] =
        entry?.criteria ??
        CRITERIA.criteria.filter((c) => CRITERIA.dimension_of[c] === dim);
      const matrix = entry?.matrix ?? names.map(() => names.map(() => 1));
      const sub = principalWeights(matrix);
      perMatrix[dim] = { ci: sub.ci, cr: sub.cr };
      totals[dim] = dimResult.weights[d];
      names.forEach((name, i) => {
        weights[name] = dimResult.weights[d] * sub.weights[i];
      });
    });
    const worst = Object.values(perMatrix).reduce((a, b) => (b.cr > a.cr ? b : a));
    return this.json({
      weights,
      consistency_index: worst.ci,
      consistency_ratio: worst.cr,
      consistent: worst.cr <= 0.1,
      dimension_weights: Object.fromEntries(dims.map((d, i) => [d, dimResult.weights[i]])),
      per_matrix_consistency: perMatrix,
      dimension_totals: totals,
    });
  }

  private newRun(consensusOnlyRerun: boolean): string {
    this.runCounter += 1;
    const runId = `r${this.runCounter}`;
    const stages = STAGE_NAMES.map((name, i) => {
      const reused = consensusOnlyRerun && !["consensus", "report"].includes(name);
      return {
        name,
        status: reused ? "reused" : "completed",
        fingerprint: `fp-${name}`,
        seconds: reused ? 0.001 : STAGE_SECONDS[i],
        reused,
      };
    });
    this.runs.set(runId, {
      manifest: {
        run_id: runId,
        status: "completed",
        failed_stage: null,
        error: null,
        data_id: "d1",
        config: {},
        stages,
      },
      pollsUntilDone: this.pollsBeforeDone,
    });
    return runId;
  }

  private snapshot(run: RunRecord): Record<string, unknown> {
    const manifest = run.manifest as any;
    if (run.pollsUntilDone <= 0) {
      return manifest;
    }
    run.pollsUntilDone -= 1;
    const total = manifest.stages.length;
    const done = total - Math.min(total, run.pollsUntilDone + 1);
    return {
      ...manifest,
      status: "running",
      stages: manifest.stages.map((s: any, i: number) =>
        i < done ? s : { ...s, status: i === done ? "running" : "pending", seconds: null },
      ),
    };
  }
}
