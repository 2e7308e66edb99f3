"""Report tables for a completed run: the grid-search table, the
consensus reallocation table, both contingency matrices, per-segment
feature means, and the snake-plot data series."""

from __future__ import annotations

import numpy as np

__all__ = ["build_report_tables", "snake_series", "segment_means"]


def _csv(header: list[str], rows: list[list]) -> str:
    def cell(value) -> str:
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def grid_table(grid_report) -> tuple[list[dict], str]:
    rows = grid_report.to_table()
    csv_rows = [
        [r["method"], r["measure"], r["k"],
         float(r["silhouette"]), float(r["calinski_harabasz"])]
        for r in rows if r["error"] is None
    ]
    return rows, _csv(["method", "measure", "k", "silhouette", "calinski_harabasz"], csv_rows)


def _net_pct(source: np.ndarray, final: np.ndarray, denom: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(denom > 0, 100.0 * np.abs(final - source) / denom, 0.0)
    return pct


def reallocation_table(partition) -> tuple[list[dict], str]:
    """Per-segment counts under each method plus reallocation percentages.

    Both percent-change readings are reported with explicit denominators:
    the movers-based one (customers whose source segment differs, over the
    final size) and the net size change over final and source sizes.
    """
    k = partition.sizes_final.size
    final = partition.sizes_final.astype(float)
    t = partition.sizes_t.astype(float)
    s = partition.sizes_s.astype(float)
    net_t_final = _net_pct(t, final, final)
    net_s_final = _net_pct(s, final, final)
    net_t_source = _net_pct(t, final, t)
    net_s_source = _net_pct(s, final, s)
    rows = []
    for c in range(k):
        rows.append({
            "segment": f"C{c + 1}",
            "time_series": int(partition.sizes_t[c]),
            "stability": int(partition.sizes_s[c]),
            "final": int(partition.sizes_final[c]),
            "pct_moved_vs_t": float(partition.pct_change_t[c]),
            "pct_moved_vs_s": float(partition.pct_change_s[c]),
            "net_pct_vs_t_of_final": float(net_t_final[c]),
            "net_pct_vs_s_of_final": float(net_s_final[c]),
            "net_pct_vs_t_of_source": float(net_t_source[c]),
            "net_pct_vs_s_of_source": float(net_s_source[c]),
        })
    header = list(rows[0].keys())
    return rows, _csv(header, [[r[h] for h in header] for r in rows])


def contingency_table(matrix: np.ndarray, source_name: str) -> tuple[dict, str]:
    k_final, k_source = matrix.shape
    header = ["final"] + [f"{source_name}_C{j + 1}" for j in range(k_source)] + ["total"]
    rows = []
    for i in range(k_final):
        rows.append([f"C{i + 1}"] + [int(v) for v in matrix[i]] + [int(matrix[i].sum())])
    rows.append(["total"] + [int(v) for v in matrix.sum(axis=0)] + [int(matrix.sum())])
    payload = {
        "rows": [f"C{i + 1}" for i in range(k_final)],
        "columns": [f"C{j + 1}" for j in range(k_source)],
        "counts": matrix.tolist(),
    }
    return payload, _csv(header, rows)


def segment_means(raw_aggregates: np.ndarray, labels: np.ndarray, feature_names) -> list[dict]:
    rows = []
    for c in sorted(np.unique(labels)):
        members = raw_aggregates[labels == c]
        row = {"segment": f"C{int(c) + 1}", "count": int(members.shape[0])}
        for j, name in enumerate(feature_names):
            row[name] = float(members[:, j].mean())
        rows.append(row)
    return rows


def snake_series(raw_aggregates: np.ndarray, labels: np.ndarray, feature_names) -> dict:
    """Per-segment min-max scaled feature means, one series per segment."""
    X = np.asarray(raw_aggregates, dtype=float)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span = np.where(span == 0, 1.0, span)
    scaled = (X - lo) / span
    segments = []
    for c in sorted(np.unique(labels)):
        values = scaled[labels == c].mean(axis=0)
        segments.append({"segment": f"C{int(c) + 1}", "values": [float(v) for v in values]})
    return {"features": list(feature_names), "segments": segments}


def transition_heatmap(transition) -> dict:
    return {
        "matrix": transition.t.tolist(),
        "counts": transition.counts.tolist(),
        "uniform_rows": list(transition.uniform_rows),
    }


def build_report_tables(grid_report, partition, raw_panel, final_labels, transition) -> dict:
    grid_rows, grid_csv = grid_table(grid_report)
    realloc_rows, realloc_csv = reallocation_table(partition)
    cont_t, cont_t_csv = contingency_table(partition.contingency_vs_t, "t")
    cont_s, cont_s_csv = contingency_table(partition.contingency_vs_s, "s")
    means = segment_means(raw_panel.aggregates, final_labels, raw_panel.feature_names)
    snake = snake_series(raw_panel.aggregates, final_labels, raw_panel.feature_names)
    means_header = list(means[0].keys())
    return {
        "json": {
            "grid": grid_rows,
            "reallocation": realloc_rows,
            "contingency_vs_t": cont_t,
            "contingency_vs_s": cont_s,
            "segment_means": means,
            "snake": snake,
            "transition": transition_heatmap(transition),
        },
        "csv": {
            "grid": grid_csv,
            "reallocation": realloc_csv,
            "contingency_vs_t": cont_t_csv,
            "contingency_vs_s": cont_s_csv,
            "segment_means": _csv(means_header, [[r[h] for h in means_header] for r in means]),
        },
    }
