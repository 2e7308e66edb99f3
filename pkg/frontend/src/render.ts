/** SVG and table markup builders. Pure string functions so the views can
 * be checked without a browser. */

import { ContingencyView, HeatmapCell, SnakeView } from "./explorer.js";
import { ReciprocalMatrix } from "./matrix.js";

const PALETTE = ["#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c", "#0891b2", "#ca8a04", "#4b5563"];

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderSnakeSvg(view: SnakeView, width = 640, height = 280): string {
  const pad = 36;
  const m = view.features.length;
  const xs = view.features.map((_, i) => pad + (i * (width - 2 * pad)) / Math.max(1, m - 1));
  const y = (v: number) => height - pad - v * (height - 2 * pad);
  const lines = view.series.map((series, s) => {
    const points = series.values
      .map((v, i) => `${xs[i].toFixed(1)},${y(v).toFixed(1)}`)
      .join(" ");
    const color = PALETTE[s % PALETTE.length];
    return (
      `<polyline class="snake-series" data-segment="${esc(series.segment)}" ` +
      `fill="none" stroke="${color}" stroke-width="2" points="${points}"/>`
    );
  });
  const labels = view.features.map(
    (name, i) =>
      `<text x="${xs[i].toFixed(1)}" y="${height - 8}" font-size="9" ` +
      `text-anchor="middle">${esc(name)}</text>`,
  );
  return (
    `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">` +
    lines.join("") +
    labels.join("") +
    "</svg>"
  );
}

export function renderHeatmapSvg(k: number, cells: HeatmapCell[], size = 240): string {
  const cell = size / k;
  const rects = cells.map((c) => {
    const opacity = Math.max(0.04, c.probability);
    return (
      `<rect class="heatmap-cell" data-from="${c.from}" data-to="${c.to}" ` +
      `x="${(c.to * cell).toFixed(1)}" y="${(c.from * cell).toFixed(1)}" ` +
      `width="${cell.toFixed(1)}" height="${cell.toFixed(1)}" ` +
      `fill="#2563eb" fill-opacity="${opacity.toFixed(3)}">` +
      `<title>C${c.from + 1} to C${c.to + 1}: ${(100 * c.probability).toFixed(1)}%</title>` +
      `</rect>`
    );
  });
  return (
    `<svg viewBox="0 0 ${size} ${size}" xmlns="http://www.w3.org/2000/svg">` +
    rects.join("") +
    "</svg>"
  );
}

export function renderContingencyTable(view: ContingencyView): string {
  const head =
    `<tr><th>final \\ ${esc(view.source)}</th>` +
    view.columns.map((c) => `<th>${esc(c)}</th>`).join("") +
    "<th>total</th></tr>";
  const body = view.rows
    .map(
      (row) =>
        `<tr><th>${esc(row.label)}</th>` +
        row.counts.map((v) => `<td>${v}</td>`).join("") +
        `<td class="total">${row.total}</td></tr>`,
    )
    .join("");
  const totals =
    "<tr><th>total</th>" +
    view.columnTotals.map((v) => `<td class="total">${v}</td>`).join("") +
    `<td class="total">${view.grandTotal}</td></tr>`;
  return `<table class="contingency">${head}${body}${totals}</table>`;
}

export function renderMatrixEditor(name: string, matrix: ReciprocalMatrix, blocked: boolean): string {
  const header =
    "<tr><th></th>" + matrix.names.map((n) => `<th>${esc(n)}</th>`).join("") + "</tr>";
  const rows = matrix.names
    .map((rowName, i) => {
      const cells = matrix.names
        .map((_, j) => {
          const value = matrix.get(i, j);
          if (i === j) return `<td class="diag">1</td>`;
          if (i > j) return `<td class="mirror">${value.toFixed(3)}</td>`;
          return (
            `<td><input type="number" class="judgment" data-matrix="${esc(name)}" ` +
            `data-i="${i}" data-j="${j}" min="0.111" max="9" step="any" ` +
            `value="${value.toFixed(3)}"/></td>`
          );
        })
        .join("");
      return `<tr><th>${esc(rowName)}</th>${cells}</tr>`;
    })
    .join("");
  const klass = blocked ? "matrix blocked" : "matrix";
  return `<table class="${klass}" data-matrix="${esc(name)}">${header}${rows}</table>`;
}

export function renderStageList(
  stages: Array<{ name: string; status: string; seconds: number | null; reused: boolean }>,
): string {
  const items = stages
    .map((s) => {
      const timing =
        s.seconds === null ? "" : ` <span class="secs">${s.seconds.toFixed(2)}s</span>`;
      const badge = s.reused ? ' <span class="reused">reused</span>' : "";
      return `<li class="stage ${s.status}" data-stage="${esc(s.name)}">${esc(s.name)}: ${esc(s.status)}${timing}${badge}</li>`;
    })
    .join("");
  return `<ul class="stages">${items}</ul>`;
}
