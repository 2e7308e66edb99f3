/** Pure view-data builders for the segment explorer. The UI never
 * recomputes math: every number here is taken verbatim from the service's
 * persisted report document. */

import { ContingencyData, ReportTables, RunManifest, StageStatus } from "./api.js";

export interface SnakeView {
  features: string[];
  series: Array<{ segment: string; values: number[] }>;
}

/** One series per final segment; values are the service's per-segment
 * scaled feature means, untouched. */
export function snakeView(report: ReportTables): SnakeView {
  return {
    features: [...report.snake.features],
    series: report.snake.segments.map((s) => ({
      segment: s.segment,
      values: [...s.values],
    })),
  };
}

export interface HeatmapCell {
  from: number;
  to: number;
  probability: number;
}

export function transitionHeatmap(report: ReportTables): { k: number; cells: HeatmapCell[] } {
  const matrix = report.transition.matrix;
  const cells: HeatmapCell[] = [];
  matrix.forEach((row, from) => {
    row.forEach((probability, to) => {
      cells.push({ from, to, probability });
    });
  });
  return { k: matrix.length, cells };
}

export interface ContingencyView {
  source: string;
  columns: string[];
  rows: Array<{ label: string; counts: number[]; total: number }>;
  columnTotals: number[];
  grandTotal: number;
}

export function contingencyView(data: ContingencyData, source: string): ContingencyView {
  const rows = data.rows.map((label, i) => ({
    label,
    counts: [...data.counts[i]],
    total: data.counts[i].reduce((a, b) => a + b, 0),
  }));
  const columnTotals = data.columns.map((_, j) =>
    data.counts.reduce((acc, row) => acc + row[j], 0),
  );
  return {
    source,
    columns: [...data.columns],
    rows,
    columnTotals,
    grandTotal: columnTotals.reduce((a, b) => a + b, 0),
  };
}

export interface SegmentCard {
  segment: string;
  count: number;
  strongest: string[];
  weakest: string[];
}

/** Per-segment summary: the features where this segment holds the highest
 * or lowest mean across segments. */
export function segmentCards(report: ReportTables): SegmentCard[] {
  const rows = report.segment_means;
  const features = Object.keys(rows[0] ?? {}).filter(
    (key) => key !== "segment" && key !== "count",
  );
  return rows.map((row) => {
    const strongest: string[] = [];
    const weakest: string[] = [];
    for (const feature of features) {
      const values = rows.map((r) => r[feature] as number);
      const mine = row[feature] as number;
      if (mine === Math.max(...values)) strongest.push(feature);
      if (mine === Math.min(...values)) weakest.push(feature);
    }
    return {
      segment: String(row.segment),
      count: Number(row.count),
      strongest,
      weakest,
    };
  });
}

/** Which stages a new manifest actually recomputed. Views tied to reused
 * stages keep their data; only stale ones refetch. */
export function staleStages(manifest: RunManifest): string[] {
  return manifest.stages
    .filter((s: StageStatus) => s.status === "completed" && !s.reused)
    .map((s) => s.name);
}

/** Map stages to the views they feed. */
export const VIEWS_BY_STAGE: Record<string, string[]> = {
  ingest: ["cleaning"],
  features: ["correlation"],
  weights: ["weights"],
  distances: [],
  cluster: ["grid"],
  stability: ["timelines", "transition"],
  consensus: ["consensus"],
  report: ["snake", "contingency", "cards", "reallocation"],
};

export function viewsToRefresh(manifest: RunManifest): string[] {
  const views = new Set<string>();
  for (const stage of staleStages(manifest)) {
    for (const view of VIEWS_BY_STAGE[stage] ?? []) {
      views.add(view);
    }
  }
  return [...views];
}
