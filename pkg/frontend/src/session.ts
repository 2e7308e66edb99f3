/** Session state for the steering loop: editable judgment matrices with a
 * live consistency readout, score and consensus sliders, and the active
 * run. Edits round-trip to the weight endpoint; the session refuses to
 * submit while any matrix is inconsistent or the readout is stale. */

import {
  ApiClient,
  CriteriaInfo,
  OfflineError,
  RunManifest,
  WeightsResponse,
} from "./api.js";
import { ReciprocalMatrix } from "./matrix.js";

export const CR_LIMIT = 0.1;

export interface ScoreWeights {
  alpha: number;
  beta: number;
  gamma: number;
}

export class SubmissionBlocked extends Error {
  constructor(readonly matrices: string[], message?: string) {
    super(message ?? `consistency ratio above ${CR_LIMIT} in: ${matrices.join(", ")}`);
    this.name = "SubmissionBlocked";
  }
}

export class SessionState {
  readonly dimensionMatrix: ReciprocalMatrix;
  readonly criterionMatrices: Record<string, ReciprocalMatrix> = {};
  scoreWeights: ScoreWeights = { alpha: 1 / 3, beta: 1 / 3, gamma: 1 / 3 };
  consensusTimeSeriesWeight = 0.6;
  activeRunId: string | null = null;
  dataId: string | null = null;
  lastReadout: WeightsResponse | null = null;
  offline = false;

  constructor(readonly criteria: CriteriaInfo, private readonly api: ApiClient) {
    this.dimensionMatrix = new ReciprocalMatrix([...criteria.dimensions]);
    for (const dim of criteria.dimensions) {
      const names = criteria.criteria.filter((c) => criteria.dimension_of[c] === dim);
      this.criterionMatrices[dim] = new ReciprocalMatrix(names);
    }
  }

  get consensusWeights(): { w_t: number; w_s: number } {
    return { w_t: this.consensusTimeSeriesWeight, w_s: 1 - this.consensusTimeSeriesWeight };
  }

  setConsensusTimeSeriesWeight(value: number): void {
    if (value < 0 || value > 1) {
      throw new RangeError("consensus weight must be in [0, 1]");
    }
    this.consensusTimeSeriesWeight = value;
  }

  matrixByName(name: string): ReciprocalMatrix {
    if (name === "dimensions") return this.dimensionMatrix;
    const matrix = this.criterionMatrices[name];
    if (!matrix) throw new RangeError(`unknown matrix ${name}`);
    return matrix;
  }

  /** Apply one judgment edit (reciprocity enforced by the matrix itself)
   * and refresh the consistency readout from the service. When the
   * service is unreachable the edit is kept and the session goes into
   * offline mode; the next successful round-trip clears it. */
  async edit(matrixName: string, i: number, j: number, value: number): Promise<void> {
    this.matrixByName(matrixName).set(i, j, value);
    await this.refreshConsistency();
  }

  async refreshConsistency(): Promise<WeightsResponse | null> {
    try {
      const readout = await this.api.computeWeights({
        mode: "hierarchical",
        dimension_order: [...this.criteria.dimensions],
        dimension_matrix: this.dimensionMatrix.toRows(),
        criterion_matrices: Object.fromEntries(
          Object.entries(this.criterionMatrices).map(([dim, matrix]) => [
            dim,
            { criteria: [...matrix.names], matrix: matrix.toRows() },
          ]),
        ),
      });
      this.lastReadout = readout;
      this.offline = false;
      return readout;
    } catch (err) {
      if (err instanceof OfflineError) {
        this.offline = true;
        return null;
      }
      throw err;
    }
  }

  /** Matrices whose consistency ratio exceeds the gate, by name. */
  get blockingMatrices(): string[] {
    if (!this.lastReadout) return [];
    return Object.entries(this.lastReadout.per_matrix_consistency)
      .filter(([, entry]) => entry.cr > CR_LIMIT)
      .map(([name]) => name);
  }

  get canSubmit(): boolean {
    return (
      !this.offline &&
      this.dataId !== null &&
      this.lastReadout !== null &&
      this.blockingMatrices.length === 0
    );
  }

  ahpConfig(): Record<string, unknown> {
    return {
      weights_mode: "hierarchical",
      ahp: {
        dimension_order: [...this.criteria.dimensions],
        dimension_matrix: this.dimensionMatrix.toRows(),
        criterion_matrices: Object.fromEntries(
          Object.entries(this.criterionMatrices).map(([dim, matrix]) => [
            dim,
            { criteria: [...matrix.names], matrix: matrix.toRows() },
          ]),
        ),
      },
    };
  }

  runConfig(): Record<string, unknown> {
    const { w_t, w_s } = this.consensusWeights;
    return {
      ...this.ahpConfig(),
      score_weights: { ...this.scoreWeights },
      w_t,
      w_s,
    };
  }

  /** Launch a full run. Refuses while blocked, naming the offending
   * sub-matrices, so an inconsistent judgment can never reach a run. */
  async launch(): Promise<string> {
    if (this.lastReadout === null) {
      await this.refreshConsistency();
    }
    if (!this.canSubmit) {
      const blockers = this.blockingMatrices;
      if (blockers.length > 0) {
        throw new SubmissionBlocked(blockers);
      }
      throw new SubmissionBlocked([], this.offline ? "service offline" : "no data uploaded");
    }
    const { run_id } = await this.api.launchRun(this.dataId as string, this.runConfig());
    this.activeRunId = run_id;
    return run_id;
  }

  /** What-if: re-run the active run with changed consensus weights only.
   * The service reuses every stage whose fingerprint is unchanged. */
  async whatIfConsensus(timeSeriesWeight: number): Promise<string> {
    if (!this.activeRunId) {
      throw new Error("no active run to rerun");
    }
    this.setConsensusTimeSeriesWeight(timeSeriesWeight);
    const { w_t, w_s } = this.consensusWeights;
    const { run_id } = await this.api.rerun(this.activeRunId, { w_t, w_s });
    this.activeRunId = run_id;
    return run_id;
  }
}

/** Poll a run until it reaches a terminal state. Stage completion in the
 * returned snapshots is monotone because the service persists stages in
 * order. */
export async function pollRun(
  api: ApiClient,
  runId: string,
  options: { intervalMs?: number; timeoutMs?: number; onUpdate?: (m: RunManifest) => void } = {},
): Promise<RunManifest> {
  const interval = options.intervalMs ?? 500;
  const deadline = Date.now() + (options.timeoutMs ?? 600_000);
  for (;;) {
    const manifest = await api.runStatus(runId);
    options.onUpdate?.(manifest);
    if (manifest.status === "completed" || manifest.status === "failed") {
      return manifest;
    }
    if (Date.now() > deadline) {
      throw new Error(`run ${runId} did not finish in time`);
    }
    await new Promise((resolve) => setTimeout(resolve, interval));
  }
}
