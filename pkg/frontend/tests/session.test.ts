import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionState, SubmissionBlocked, pollRun } from "../src/session.js";
import { CRITERIA, MockService } from "./mockService.js";

let service: MockService;
let api: ApiClient;
let session: SessionState;

beforeEach(() => {
  service = new MockService();
  api = new ApiClient("", service.fetch);
  session = new SessionState(CRITERIA, api);
});

describe("SessionState preference editing", () => {
  it("round-trips every edit to the weight endpoint", async () => {
    await session.edit("RFM", 0, 2, 5);
    await session.edit("dimensions", 0, 1, 3);
    const calls = service.log.filter((c) => c.path === "/api/weights");
    expect(calls).toHaveLength(2);
    const sent = calls[1].body as any;
    expect(sent.dimension_matrix[0][1]).toBe(3);
    expect(sent.dimension_matrix[1][0]).toBeCloseTo(1 / 3, 12);
    expect(session.lastReadout).not.toBeNull();
  });

  it("never submits a matrix violating reciprocity", async () => {
    await session.edit("Growth", 1, 3, 7.5);
    await session.edit("Growth", 0, 1, 2.25);
    for (const call of service.log.filter((c) => c.path === "/api/weights")) {
      const body = call.body as any;
      for (const entry of Object.values(body.criterion_matrices) as any[]) {
        const rows = entry.matrix as number[][];
        for (let i = 0; i < rows.length; i++) {
          for (let j = 0; j < rows.length; j++) {
            expect(rows[i][j] * rows[j][i]).toBeCloseTo(1, 9);
          }
        }
      }
    }
  });

  it("raising one criterion's judgment raises its weight", async () => {
    await session.refreshConsistency();
    const before = session.lastReadout!.weights["sales"];
    const rfm = session.criterionMatrices["RFM"];
    const salesIdx = rfm.names.indexOf("sales");
    const recencyIdx = rfm.names.indexOf("recency");
    await session.edit("RFM", salesIdx, recencyIdx, 9);
    const after = session.lastReadout!.weights["sales"];
    expect(after).toBeGreaterThan(before);
  });

  it("reports consistent equal-split weights for all-ones matrices", async () => {
    const readout = await session.refreshConsistency();
    expect(readout!.consistency_ratio).toBe(0);
    const total = Object.values(readout!.weights).reduce((a, b) => a + b, 0);
    expect(total).toBeCloseTo(1, 9);
    // equal dimension thirds, split evenly inside each dimension
    expect(readout!.weights["recency"]).toBeCloseTo(1 / 9, 9);
    expect(readout!.weights["volume"]).toBeCloseTo(1 / 12, 9);
    expect(readout!.dimension_totals!["Growth"]).toBeCloseTo(1 / 3, 9);
  });

  it("blocks submission while any matrix has CR above 0.1, naming it", async () => {
    session.dataId = "d1";
    // a cyclic 3x3 judgment is maximally inconsistent
    const rfm = session.criterionMatrices["RFM"];
    rfm.set(0, 1, 9);
    rfm.set(1, 2, 9);
    await session.edit("RFM", 0, 2, 1 / 9);
    expect(session.blockingMatrices).toEqual(["RFM"]);
    expect(session.canSubmit).toBe(false);
    await expect(session.launch()).rejects.toThrow(SubmissionBlocked);
    await expect(session.launch()).rejects.toThrow(/RFM/);
    expect(service.log.filter((c) => c.path === "/api/runs")).toHaveLength(0);
  });

  it("unblocks once the judgments are consistent again", async () => {
    session.dataId = "d1";
    const rfm = session.criterionMatrices["RFM"];
    rfm.set(0, 1, 9);
    rfm.set(1, 2, 9);
    await session.edit("RFM", 0, 2, 1 / 9);
    expect(session.canSubmit).toBe(false);
    await session.edit("RFM", 0, 2, 9);  // transitive direction restored
    await session.edit("RFM", 0, 1, 3);
    await session.edit("RFM", 1, 2, 3);
    expect(session.blockingMatrices).toEqual([]);
    expect(session.canSubmit).toBe(true);
    const runId = await session.launch();
    expect(runId).toBe("r1");
    expect(session.activeRunId).toBe("r1");
  });

  it("goes offline on network failure and retains the edits", async () => {
    service.offline = true;
    await session.edit("Stability", 0, 1, 4);
    expect(session.offline).toBe(true);
    expect(session.canSubmit).toBe(false);
    expect(session.matrixByName("Stability").get(0, 1)).toBe(4);
    service.offline = false;
    await session.edit("Stability", 0, 2, 2);
    expect(session.offline).toBe(false);
    const sent = service.log.filter((c) => c.path === "/api/weights").at(-1)!.body as any;
    expect(sent.criterion_matrices["Stability"].matrix[0][1]).toBe(4);
  });

  it("reproduces the case-study dimension totals from matching judgments", async () => {
    // an RFM/Growth/Stability split of 0.29/0.44/0.27 entered as ratios
    const totals = [0.29, 0.44, 0.27];
    const dims = session.dimensionMatrix;
    for (let i = 0; i < 3; i++) {
      for (let j = i + 1; j < 3; j++) {
        dims.set(i, j, totals[i] / totals[j]);
      }
    }
    const readout = await session.refreshConsistency();
    expect(readout!.dimension_totals!["RFM"]).toBeCloseTo(0.29, 6);
    expect(readout!.dimension_totals!["Growth"]).toBeCloseTo(0.44, 6);
    expect(readout!.dimension_totals!["Stability"]).toBeCloseTo(0.27, 6);
    expect(readout!.consistent).toBe(true);
  });

  it("couples the consensus sliders so w_t + w_s = 1", () => {
    session.setConsensusTimeSeriesWeight(0.75);
    expect(session.consensusWeights).toEqual({ w_t: 0.75, w_s: 0.25 });
    expect(() => session.setConsensusTimeSeriesWeight(1.2)).toThrow(RangeError);
  });

  it("ships score and consensus weights in the run config", async () => {
    session.dataId = "d1";
    session.scoreWeights = { alpha: 0.5, beta: 0.25, gamma: 0.25 };
    session.setConsensusTimeSeriesWeight(0.8);
    await session.refreshConsistency();
    await session.launch();
    const launch = service.log.find((c) => c.path === "/api/runs")!.body as any;
    expect(launch.config.score_weights).toEqual({ alpha: 0.5, beta: 0.25, gamma: 0.25 });
    expect(launch.config.w_t).toBe(0.8);
    expect(launch.config.w_s).toBeCloseTo(0.2, 12);
    expect(launch.config.weights_mode).toBe("hierarchical");
  });
});

describe("pollRun", () => {
  it("polls until the run completes with monotone stage counts", async () => {
    service.pollsBeforeDone = 4;
    session.dataId = "d1";
    await session.refreshConsistency();
    const runId = await session.launch();
    const counts: number[] = [];
    const manifest = await pollRun(api, runId, {
      intervalMs: 0,
      onUpdate: (m) => {
        counts.push(m.stages.filter((s) => s.status === "completed" || s.status === "reused").length);
      },
    });
    expect(manifest.status).toBe("completed");
    expect(counts.length).toBeGreaterThan(1);
    expect([...counts].sort((a, b) => a - b)).toEqual(counts);
  });
});
