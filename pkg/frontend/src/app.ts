/** DOM wiring for the steering loop. Logic lives in the imported modules;
 * this file only reads inputs, calls the session/client, and rerenders. */

import { ApiClient, ReportTables, RunManifest } from "./api.js";
import { contingencyView, segmentCards, snakeView, transitionHeatmap, viewsToRefresh } from "./explorer.js";
import {
  renderContingencyTable,
  renderHeatmapSvg,
  renderMatrixEditor,
  renderSnakeSvg,
  renderStageList,
} from "./render.js";
import { CR_LIMIT, SessionState, SubmissionBlocked, pollRun } from "./session.js";

const api = new ApiClient("");
let session: SessionState;
let lastReport: ReportTables | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(offline: boolean): void {
  el("offline-banner").style.display = offline ? "block" : "none";
}

function renderConsistency(): void {
  const readout = session.lastReadout;
  const box = el("consistency");
  if (!readout) {
    box.textContent = "no readout yet";
    return;
  }
  const blockers = session.blockingMatrices;
  const state = blockers.length
    ? `<p class="warning">CR above ${CR_LIMIT}: adjust <strong>${blockers.join(", ")}</strong> before running.</p>`
    : `<p class="ok">consistent (worst CR ${readout.consistency_ratio.toFixed(4)})</p>`;
  const weights = Object.entries(readout.weights)
    .map(([name, w]) => `<li>${name}: ${w.toFixed(4)}</li>`)
    .join("");
  const totals = readout.dimension_totals
    ? Object.entries(readout.dimension_totals)
        .map(([d, t]) => `${d}=${t.toFixed(2)}`)
        .join(" ")
    : "";
  box.innerHTML = `${state}<p class="totals">${totals}</p><ul class="weights">${weights}</ul>`;
  (el("launch") as HTMLButtonElement).disabled = !session.canSubmit;
}

function renderMatrices(): void {
  const blockers = new Set(session.blockingMatrices);
  const parts = [renderMatrixEditor("dimensions", session.dimensionMatrix, blockers.has("dimensions"))];
  for (const [dim, matrix] of Object.entries(session.criterionMatrices)) {
    parts.push(`<h4>${dim}</h4>` + renderMatrixEditor(dim, matrix, blockers.has(dim)));
  }
  el("matrices").innerHTML = "<h4>Dimensions</h4>" + parts.join("");
}

async function onMatrixEdit(event: Event): Promise<void> {
  const input = event.target as HTMLInputElement;
  if (!input.classList.contains("judgment")) return;
  const value = Number(input.value);
  if (!Number.isFinite(value) || value <= 0) return;
  await session.edit(
    input.dataset.matrix as string,
    Number(input.dataset.i),
    Number(input.dataset.j),
    value,
  );
  setBanner(session.offline);
  renderMatrices();
  renderConsistency();
}

function renderManifest(manifest: RunManifest): void {
  el("run-status").innerHTML =
    `<p>run <code>${manifest.run_id}</code>: <strong>${manifest.status}</strong>` +
    (manifest.failed_stage ? ` (failed at ${manifest.failed_stage}: ${manifest.error})` : "") +
    "</p>" +
    renderStageList(manifest.stages);
}

function renderExplorer(report: ReportTables): void {
  lastReport = report;
  el("snake").innerHTML = renderSnakeSvg(snakeView(report));
  const heatmap = transitionHeatmap(report);
  el("heatmap").innerHTML = renderHeatmapSvg(heatmap.k, heatmap.cells);
  el("contingency-t").innerHTML = renderContingencyTable(
    contingencyView(report.contingency_vs_t, "time-series"),
  );
  el("contingency-s").innerHTML = renderContingencyTable(
    contingencyView(report.contingency_vs_s, "stability"),
  );
  el("cards").innerHTML = segmentCards(report)
    .map(
      (card) =>
        `<div class="card"><h4>${card.segment} (${card.count})</h4>` +
        `<p>high: ${card.strongest.join(", ") || "none"}</p>` +
        `<p>low: ${card.weakest.join(", ") || "none"}</p></div>`,
    )
    .join("");
}

async function refreshViews(manifest: RunManifest): Promise<void> {
  const views = new Set(viewsToRefresh(manifest));
  const needsReport = ["snake", "contingency", "cards", "reallocation", "consensus"].some((v) =>
    views.has(v),
  );
  if (needsReport || lastReport === null) {
    renderExplorer(await api.report(manifest.run_id));
  }
}

async function launchAndFollow(launch: () => Promise<string>): Promise<void> {
  let runId: string;
  try {
    runId = await launch();
  } catch (err) {
    if (err instanceof SubmissionBlocked) {
      el("run-status").innerHTML = `<p class="warning">${err.message}</p>`;
      return;
    }
    throw err;
  }
  const manifest = await pollRun(api, runId, { intervalMs: 400, onUpdate: renderManifest });
  renderManifest(manifest);
  if (manifest.status === "completed") {
    await refreshViews(manifest);
  }
}

async function main(): Promise<void> {
  const criteria = await api.criteria();
  session = new SessionState(criteria, api);
  renderMatrices();
  await session.refreshConsistency();
  setBanner(session.offline);
  renderConsistency();

  el("matrices").addEventListener("change", (event) => {
    void onMatrixEdit(event);
  });

  el("upload").addEventListener("click", async () => {
    const csv = (el("csv-input") as HTMLTextAreaElement).value;
    const { data_id } = await api.uploadData(csv);
    session.dataId = data_id;
    el("data-status").textContent = `data ${data_id} uploaded`;
    renderConsistency();
  });

  for (const name of ["alpha", "beta", "gamma"] as const) {
    el(`score-${name}`).addEventListener("change", (event) => {
      session.scoreWeights[name] = Number((event.target as HTMLInputElement).value);
    });
  }
  el("wt-slider").addEventListener("input", (event) => {
    const w = Number((event.target as HTMLInputElement).value);
    session.setConsensusTimeSeriesWeight(w);
    el("wt-readout").textContent = `w_t=${w.toFixed(2)} w_s=${(1 - w).toFixed(2)}`;
  });

  el("launch").addEventListener("click", () => {
    void launchAndFollow(() => session.launch());
  });

  el("whatif").addEventListener("click", () => {
    void launchAndFollow(() => session.whatIfConsensus(session.consensusTimeSeriesWeight));
  });
}

void main();
