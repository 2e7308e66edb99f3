"""Stage orchestration: ingest -> features -> weights -> distances ->
cluster -> stability -> consensus -> report, with per-stage persistence,
fingerprint-based reuse, and partial-artifact persistence on failure."""

from __future__ import annotations

import io
import json
import tempfile
import time
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

import numpy as np

from .. import cluster, consensus, features, ingest, mcdm, stability, tsdist
from .config import STAGES, RunConfig
from .reports import build_report_tables
from .store import RunStore

__all__ = ["RunArtifact", "run_pipeline"]


@dataclass
class RunArtifact:
    run_id: str
    config: RunConfig
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    fingerprints: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    reused: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    @property
    def final_labels(self) -> np.ndarray | None:
        return self.outputs.get("final_labels")


def run_pipeline(
    config: RunConfig,
    source=None,
    data_id: str | None = None,
    store: RunStore | None = None,
    run_id: str | None = None,
    reuse: bool = True,
    until: str | None = None,
    create_run: bool = True,
) -> RunArtifact:
    """Execute the full run lifecycle against a run store.

    Each stage's outputs are persisted (content-addressed by the chained
    config fingerprint) before the next stage starts; a failure marks the
    stage and returns the partial artifact with the failing stage and
    cause. ``until`` stops after the named stage.
    """
    config.validate()
    store = store or RunStore(tempfile.mkdtemp(prefix="b2bseg-"))
    if data_id is None:
        if source is None:
            raise ValueError("need a data source or a data_id")
        data_id = store.save_data(_read_source(source))
    if create_run:
        run_id = store.new_run(config, data_id, run_id=run_id)
    elif run_id is None:
        raise ValueError("create_run=False requires a run_id")
    artifact = RunArtifact(run_id=run_id, config=config)
    ctx: dict = {"config": config, "raw_bytes": store.load_data(data_id)}

    upstream = f"data:{data_id}"
    stop_after = until or STAGES[-1]
    if stop_after not in STAGES:
        raise ValueError(f"unknown stage {stop_after!r}")
    for name in STAGES:
        fp = config.stage_fingerprint(name, upstream)
        upstream = fp
        artifact.fingerprints[name] = fp
        compute, save, load = _STAGE_FNS[name]
        store.update_stage(run_id, name, status="running", fingerprint=fp)
        start = time.perf_counter()
        try:
            if reuse and store.stage_complete(fp):
                outputs = load(store.stage_dir(fp))
                elapsed = time.perf_counter() - start
                artifact.reused[name] = True
            else:
                outputs = compute(ctx)
                directory = store.open_stage(fp)
                save(directory, outputs)
                store.seal_stage(fp)
                elapsed = time.perf_counter() - start
                artifact.reused[name] = False
        except Exception as exc:
            store.update_stage(run_id, name, status="failed")
            store.finish_run(run_id, "failed", failed_stage=name,
                            error=f"{type(exc).__name__}: {exc}")
            artifact.status = "failed"
            artifact.failed_stage = name
            artifact.error = f"{type(exc).__name__}: {exc}"
            return artifact
        ctx.update(outputs)
        artifact.outputs.update(outputs)
        artifact.timings[name] = elapsed
        store.update_stage(
            run_id, name,
            status="reused" if artifact.reused[name] else "completed",
            seconds=round(elapsed, 6), reused=artifact.reused[name],
        )
        if name == stop_after:
            break
    store.finish_run(run_id, "completed")
    artifact.status = "completed"
    return artifact


def _read_source(source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        return source.encode("utf-8")
    if isinstance(source, Path):
        return source.read_bytes()
    if hasattr(source, "read"):
        data = source.read()
        return data if isinstance(data, bytes) else data.encode("utf-8")
    raise TypeError(f"unsupported source type {type(source)!r}")


# -- ingest --------------------------------------------------------------------


def _ingest_compute(ctx):
    config: RunConfig = ctx["config"]
    records, report = ingest.parse_transactions(
        ctx["raw_bytes"], format_config=config.column_map, delimiter=config.delimiter
    )
    if not records:
        raise ValueError("no valid transactions after cleaning")
    return {"records": records, "cleaning_report": report}


def _records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write("customer,fiscal,created_on,bill_date,product_group,"
              "distribution_channel,weight,sales,cost\n")
    for r in records:
        buf.write(
            f"{r.customer_id},{r.fiscal_period},{r.created_on.isoformat()},"
            f"{r.bill_date.isoformat()},{r.product_group},{r.distribution_channel},"
            f"{r.weight_tons!r},{r.sales_value!r},{r.cost_value!r}\n"
        )
    return buf.getvalue()


def _ingest_save(directory, outputs):
    RunStore.write_file(directory, "records.csv", _records_to_csv(outputs["records"]))
    RunStore.write_file(directory, "cleaning_report.json",
                        json.dumps(outputs["cleaning_report"].as_dict(), indent=2))


def _ingest_load(directory):
    records, _ = ingest.parse_transactions((directory / "records.csv").read_bytes())
    payload = json.loads((directory / "cleaning_report.json").read_text())
    report = ingest.CleaningReport(
        rows_read=payload["rows_read"], rows_kept=payload["rows_kept"],
        rows_dropped=payload["rows_dropped"], drop_reasons=payload["drop_reasons"],
        per_column_skewness=payload["per_column_skewness"],
        per_column_kurtosis=payload["per_column_kurtosis"],
        transforms_applied=payload["transforms_applied"],
    )
    return {"records": records, "cleaning_report": report}


# -- features --------------------------------------------------------------------


def _features_compute(ctx):
    config: RunConfig = ctx["config"]
    records = ctx["records"]
    as_of = (
        date.fromisoformat(config.as_of)
        if config.as_of
        else max(r.bill_date for r in records)
    )
    raw_panel = features.build_panel(records, as_of=as_of, interval=config.interval)
    correlation = (
        features.spearman(raw_panel.aggregates) if raw_panel.n_customers >= 3 else None
    )
    report = ingest.CleaningReport(**ctx["cleaning_report"].as_dict())
    work = raw_panel
    if config.transform_features:
        work, _ = _transform_panel(work, config.skew_threshold, report)
    scaled = features.scale_panel(work, method=config.scaling)
    freq_idx = raw_panel.feature_index("frequency")
    activity = raw_panel.values[:, :, freq_idx] > 0
    return {
        "raw_panel": raw_panel,
        "scaled_panel": scaled,
        "correlation": correlation,
        "activity": activity,
        "cleaning_report": report,
    }


def _transform_panel(panel, skew_threshold, report):
    """Symmetrize each feature column (plane and aggregates share one
    transform, with the shift refit over both value ranges)."""
    values = panel.values.copy()
    aggregates = panel.aggregates.copy()
    transforms: dict[str, str] = {}
    for f, name in enumerate(panel.feature_names):
        plane = values[:, :, f].ravel()
        try:
            chosen = ingest.select_transform(plane, skew_threshold=skew_threshold)
        except ingest.DegenerateInputError:
            continue
        skew, kurt = ingest.compute_moments(plane)
        report.per_column_skewness[f"feature:{name}"] = skew
        report.per_column_kurtosis[f"feature:{name}"] = kurt
        if chosen.kind == "identity":
            continue
        combined = np.concatenate([plane, aggregates[:, f]])
        try:
            chosen = ingest.refit_shift(chosen, combined)
            values[:, :, f] = ingest.apply_transform(values[:, :, f].ravel(), chosen).reshape(
                values.shape[0], values.shape[1]
            )
            aggregates[:, f] = ingest.apply_transform(aggregates[:, f], chosen)
        except ingest.TransformDomainError:
            continue
        transforms[name] = chosen.name
        report.transforms_applied[f"feature:{name}"] = chosen.name
    panel = replace(panel, values=values, aggregates=aggregates, transforms=transforms)
    return panel, transforms


def _panel_to_npz(panel) -> bytes:
    buf = io.BytesIO()
    payload = {
        "customers": np.array(panel.customers),
        "periods": np.array(panel.periods),
        "feature_names": np.array(panel.feature_names),
        "values": panel.values,
        "aggregates": panel.aggregates,
        "as_of": np.array(panel.as_of.isoformat()),
        "interval": np.array(panel.interval),
    }
    for label, params in (("scaling", panel.scaling), ("agg_scaling", panel.aggregate_scaling)):
        if params is not None:
            payload[f"{label}_method"] = np.array(params.method)
            payload[f"{label}_center"] = params.center
            payload[f"{label}_scale"] = params.scale
    np.savez(buf, **payload)
    return buf.getvalue()


def _panel_from_npz(blob: bytes):
    data = np.load(io.BytesIO(blob), allow_pickle=False)
    scaling = None
    agg_scaling = None
    if "scaling_method" in data:
        scaling = features.ScalingParams(
            method=str(data["scaling_method"]), center=data["scaling_center"],
            scale=data["scaling_scale"],
        )
    if "agg_scaling_method" in data:
        agg_scaling = features.ScalingParams(
            method=str(data["agg_scaling_method"]), center=data["agg_scaling_center"],
            scale=data["agg_scaling_scale"],
        )
    return features.FeaturePanel(
        customers=[str(c) for c in data["customers"]],
        periods=[int(p) for p in data["periods"]],
        feature_names=tuple(str(f) for f in data["feature_names"]),
        values=data["values"],
        aggregates=data["aggregates"],
        as_of=date.fromisoformat(str(data["as_of"])),
        interval=str(data["interval"]),
        scaling=scaling,
        aggregate_scaling=agg_scaling,
    )


def _features_save(directory, outputs):
    RunStore.write_file(directory, "raw_panel.npz", _panel_to_npz(outputs["raw_panel"]))
    RunStore.write_file(directory, "scaled_panel.npz", _panel_to_npz(outputs["scaled_panel"]))
    buf = io.BytesIO()
    np.save(buf, outputs["activity"])
    RunStore.write_file(directory, "activity.npy", buf.getvalue())
    corr = outputs["correlation"]
    RunStore.write_file(
        directory, "correlation.json",
        json.dumps(
            None if corr is None else {
                "feature_names": list(corr.feature_names),
                "rho": corr.rho.tolist(),
                "constant_features": list(corr.constant_features),
            }
        ),
    )
    RunStore.write_file(directory, "cleaning_report.json",
                        json.dumps(outputs["cleaning_report"].as_dict(), indent=2))


def _features_load(directory):
    corr_payload = json.loads((directory / "correlation.json").read_text())
    correlation = None
    if corr_payload is not None:
        correlation = features.CorrelationMatrix(
            feature_names=tuple(corr_payload["feature_names"]),
            rho=np.array(corr_payload["rho"]),
            constant_features=tuple(corr_payload["constant_features"]),
        )
    report_payload = json.loads((directory / "cleaning_report.json").read_text())
    return {
        "raw_panel": _panel_from_npz((directory / "raw_panel.npz").read_bytes()),
        "scaled_panel": _panel_from_npz((directory / "scaled_panel.npz").read_bytes()),
        "activity": np.load(io.BytesIO((directory / "activity.npy").read_bytes())),
        "correlation": correlation,
        "cleaning_report": ingest.CleaningReport(**report_payload),
    }


# -- weights ---------------------------------------------------------------------


def _equal_matrix(names):
    return mcdm.PairwiseMatrix(np.ones((len(names), len(names))), names=tuple(names))


def _weights_compute(ctx):
    config: RunConfig = ctx["config"]
    criteria = mcdm.default_criteria_set()
    if config.weights_mode == "literal":
        if not config.literal_weights:
            raise ValueError("literal weights_mode needs literal_weights")
        raw = {c: float(config.literal_weights[c]) for c in criteria.criteria}
        total = sum(raw.values())
        weights = mcdm.WeightVector(
            w={c: v / total for c, v in raw.items()},
            consistency_index=0.0, consistency_ratio=0.0, consistent=True,
        )
    elif config.weights_mode == "flat":
        spec = config.ahp or {}
        matrix = mcdm.PairwiseMatrix(
            np.array(spec["matrix"], dtype=float) if "matrix" in spec
            else np.ones((len(criteria.criteria),) * 2),
            names=tuple(spec.get("criteria", criteria.criteria)),
        )
        weights = mcdm.principal_weights(matrix)
        if not weights.consistent and not config.allow_inconsistent:
            raise mcdm.ConsistencyError(
                f"flat judgment matrix has CR={weights.consistency_ratio:.4f} > 0.1; "
                "adjust preferences or override"
            )
    else:
        weights = _hierarchical_from_config(config, criteria)
    return {"weights": weights, "criteria": criteria}


def _hierarchical_from_config(config: RunConfig, criteria):
    spec = config.ahp or {}
    dims = tuple(spec.get("dimension_order", criteria.dimensions))
    if "dimension_matrix" in spec:
        dim_matrix = mcdm.PairwiseMatrix(np.array(spec["dimension_matrix"], dtype=float), names=dims)
    else:
        dim_matrix = _equal_matrix(dims)
    per_dim = {}
    crit_spec = spec.get("criterion_matrices", {})
    for dim in dims:
        if dim in crit_spec:
            entry = crit_spec[dim]
            per_dim[dim] = mcdm.PairwiseMatrix(
                np.array(entry["matrix"], dtype=float),
                names=tuple(entry.get("criteria", criteria.in_dimension(dim))),
            )
        else:
            per_dim[dim] = _equal_matrix(criteria.in_dimension(dim))
    return mcdm.hierarchical_compose(
        dim_matrix, per_dim, criteria, allow_inconsistent=config.allow_inconsistent
    )


def _weights_save(directory, outputs):
    weights = outputs["weights"]
    criteria = outputs["criteria"]
    RunStore.write_file(
        directory, "weights.json",
        json.dumps({
            "w": weights.w,
            "consistency_index": weights.consistency_index,
            "consistency_ratio": weights.consistency_ratio,
            "consistent": weights.consistent,
            "dimension_weights": weights.dimension_weights,
            "per_matrix_consistency": {k: list(v) for k, v in weights.per_matrix_consistency.items()},
            "dimension_totals": weights.dimension_totals(criteria),
        }, indent=2),
    )


def _weights_load(directory):
    payload = json.loads((directory / "weights.json").read_text())
    weights = mcdm.WeightVector(
        w=payload["w"],
        consistency_index=payload["consistency_index"],
        consistency_ratio=payload["consistency_ratio"],
        consistent=payload["consistent"],
        dimension_weights=payload.get("dimension_weights", {}),
        per_matrix_consistency={
            k: tuple(v) for k, v in payload.get("per_matrix_consistency", {}).items()
        },
    )
    return {"weights": weights, "criteria": mcdm.default_criteria_set()}


# -- distances ---------------------------------------------------------------------


def _distances_compute(ctx):
    config: RunConfig = ctx["config"]
    panel = ctx["scaled_panel"]
    weights = ctx["weights"]
    matrices = {
        measure: tsdist.panel_distance(panel, measure=measure, weights=weights,
                                       k_tuning=config.k_tuning)
        for measure in config.measures
    }
    return {"distances": matrices}


def _distances_save(directory, outputs):
    buf = io.BytesIO()
    np.savez(buf, **{m: dm.d for m, dm in outputs["distances"].items()})
    RunStore.write_file(directory, "distances.npz", buf.getvalue())


def _distances_load(directory):
    data = np.load(io.BytesIO((directory / "distances.npz").read_bytes()))
    return {
        "distances": {m: tsdist.DistanceMatrix(d=data[m], measure=m) for m in data.files}
    }


# -- cluster -------------------------------------------------------------------------


def _cluster_compute(ctx):
    config: RunConfig = ctx["config"]
    report = cluster.grid_search(
        ctx["distances"], methods=tuple(config.methods), k_range=tuple(config.k_range),
        linkage=config.linkage, seed=config.seed,
    )
    best = report.best_by_silhouette
    if best is None:
        raise cluster.GridSearchError("no silhouette-scored combination available")
    chosen = {
        "method": best.method, "measure": best.measure, "k": best.k,
        "silhouette": best.silhouette, "calinski_harabasz": best.calinski_harabasz,
        "config_fingerprint": cluster._fingerprint({
            "method": best.method, "measure": best.measure, "k": best.k,
            "linkage": config.linkage, "seed": config.seed,
        }),
    }
    return {"grid_report": report, "chosen": chosen, "labels_t": best.labels}


def _cluster_save(directory, outputs):
    report = outputs["grid_report"]
    RunStore.write_file(directory, "grid.json", json.dumps(report.to_table(), indent=2))
    RunStore.write_file(directory, "chosen.json", json.dumps(outputs["chosen"], indent=2))
    buf = io.BytesIO()
    np.save(buf, outputs["labels_t"])
    RunStore.write_file(directory, "labels_t.npy", buf.getvalue())


def _cluster_load(directory):
    rows_payload = json.loads((directory / "grid.json").read_text())
    report = cluster.GridSearchReport(
        rows=[cluster.GridRow(**row) for row in rows_payload]
    )
    chosen = json.loads((directory / "chosen.json").read_text())
    labels = np.load(io.BytesIO((directory / "labels_t.npy").read_bytes()))
    ok = [r for r in report.rows if r.error is None and not np.isnan(r.silhouette)]
    report.best_by_silhouette = max(ok, key=lambda r: r.silhouette) if ok else None
    ch_ok = [r for r in report.rows if r.error is None and not np.isnan(r.calinski_harabasz)]
    report.best_by_ch = max(ch_ok, key=lambda r: r.calinski_harabasz) if ch_ok else None
    return {"grid_report": report, "chosen": chosen, "labels_t": labels}


# -- stability -------------------------------------------------------------------------


def _stability_compute(ctx):
    config: RunConfig = ctx["config"]
    chosen = ctx["chosen"]
    timelines, skipped = stability.per_period_segmentation(
        ctx["scaled_panel"], method=chosen["method"], measure=chosen["measure"],
        k=chosen["k"], weights=ctx["weights"], window_policy=config.window_policy,
        window=config.window, activity=ctx["activity"], k_tuning=config.k_tuning,
        linkage=config.linkage, seed=config.seed,
    )
    tm = stability.transition_model(timelines, k=chosen["k"])
    sw = stability.ScoreWeights(**config.score_weights)
    profiles = [stability.segment_score(tl, tm, sw) for tl in timelines]
    labels_s = np.array([p.stable_label for p in profiles], dtype=int)
    return {
        "timelines": timelines, "skipped_periods": skipped,
        "transition": tm, "profiles": profiles, "labels_s": labels_s,
    }


def _stability_save(directory, outputs):
    matrix = np.vstack([tl.labels for tl in outputs["timelines"]])
    customers = np.array([tl.customer_id for tl in outputs["timelines"]])
    buf = io.BytesIO()
    np.savez(
        buf, labels=matrix, customers=customers,
        skipped=np.array(outputs["skipped_periods"], dtype=int),
        transition=outputs["transition"].t, counts=outputs["transition"].counts,
        uniform_rows=np.array(outputs["transition"].uniform_rows, dtype=int),
        labels_s=np.array([p.stable_label for p in outputs["profiles"]], dtype=int),
    )
    RunStore.write_file(directory, "stability.npz", buf.getvalue())
    RunStore.write_file(
        directory, "profiles.json",
        json.dumps([{
            "customer_id": p.customer_id, "volatility": p.volatility,
            "continuity": p.continuity, "transition_likelihood": p.transition_likelihood,
            "segment_score": p.segment_score, "stable_label": p.stable_label,
        } for p in outputs["profiles"]], indent=2),
    )


def _stability_load(directory):
    data = np.load(io.BytesIO((directory / "stability.npz").read_bytes()))
    timelines = [
        stability.LabelTimeline(customer_id=str(c), labels=row)
        for c, row in zip(data["customers"], data["labels"])
    ]
    tm = stability.TransitionMatrix(
        t=data["transition"], counts=data["counts"],
        uniform_rows=tuple(int(i) for i in data["uniform_rows"]),
    )
    profiles = [
        stability.StabilityProfile(**p)
        for p in json.loads((directory / "profiles.json").read_text())
    ]
    return {
        "timelines": timelines,
        "skipped_periods": [int(x) for x in data["skipped"]],
        "transition": tm, "profiles": profiles, "labels_s": data["labels_s"],
    }


# -- consensus ----------------------------------------------------------------------


def _consensus_compute(ctx):
    config: RunConfig = ctx["config"]
    labels_t = np.asarray(ctx["labels_t"])
    labels_s = np.asarray(ctx["labels_s"])
    graph = consensus.build_agreement_graph(labels_t, labels_s, w_t=config.w_t, w_s=config.w_s)
    communities, modularity_q = consensus.leiden_communities(
        graph, resolution=config.resolution, seed=config.seed
    )
    k = int(ctx["chosen"]["k"])
    final = consensus.reconcile_to_k(communities, k, graph,
                                     resolution=config.resolution, seed=config.seed)
    final = consensus.align_partitions(labels_t, final, k)
    partition = consensus.consensus_report(final, labels_t, labels_s, modularity_q=modularity_q)
    table = _labels_csv(ctx["scaled_panel"].customers, final)
    return {
        "agreement_graph": graph,
        "consensus_partition": partition,
        "final_labels": final,
        "final_label_table": table,
        "consensus_diagnostics": {
            "modularity": modularity_q,
            "ari_vs_time_series": cluster.adjusted_rand_index(final, labels_t),
            "ari_vs_stability": cluster.adjusted_rand_index(final, labels_s),
            "communities_before_reconcile": int(communities.max()) + 1,
        },
    }


def _labels_csv(customers, labels) -> str:
    lines = ["customer_id,segment"]
    for cust, lab in zip(customers, labels):
        lines.append(f"{cust},{int(lab)}")
    return "\n".join(lines) + "\n"


def _consensus_save(directory, outputs):
    cp = outputs["consensus_partition"]
    buf = io.BytesIO()
    np.savez(
        buf, final=cp.final_labels, cont_t=cp.contingency_vs_t, cont_s=cp.contingency_vs_s,
        pct_t=cp.pct_change_t, pct_s=cp.pct_change_s,
        sizes_final=cp.sizes_final, sizes_t=cp.sizes_t, sizes_s=cp.sizes_s,
    )
    RunStore.write_file(directory, "consensus.npz", buf.getvalue())
    RunStore.write_file(directory, "labels.csv", outputs["final_label_table"])
    RunStore.write_file(directory, "diagnostics.json",
                        json.dumps(outputs["consensus_diagnostics"], indent=2))


def _consensus_load(directory):
    data = np.load(io.BytesIO((directory / "consensus.npz").read_bytes()))
    diagnostics = json.loads((directory / "diagnostics.json").read_text())
    cp = consensus.ConsensusPartition(
        final_labels=data["final"], modularity=diagnostics["modularity"],
        contingency_vs_t=data["cont_t"], contingency_vs_s=data["cont_s"],
        pct_change_t=data["pct_t"], pct_change_s=data["pct_s"],
        sizes_final=data["sizes_final"], sizes_t=data["sizes_t"], sizes_s=data["sizes_s"],
    )
    return {
        "agreement_graph": None,
        "consensus_partition": cp,
        "final_labels": data["final"],
        "final_label_table": (directory / "labels.csv").read_text(),
        "consensus_diagnostics": diagnostics,
    }


# -- report ------------------------------------------------------------------------


def _report_compute(ctx):
    tables = build_report_tables(
        grid_report=ctx["grid_report"],
        partition=ctx["consensus_partition"],
        raw_panel=ctx["raw_panel"],
        final_labels=ctx["final_labels"],
        transition=ctx["transition"],
    )
    return {"report_tables": tables}


def _report_save(directory, outputs):
    tables = outputs["report_tables"]
    RunStore.write_file(directory, "tables.json", json.dumps(tables["json"], indent=2))
    for name, text in tables["csv"].items():
        RunStore.write_file(directory, f"{name}.csv", text)


def _report_load(directory):
    payload = json.loads((directory / "tables.json").read_text())
    csvs = {p.stem: p.read_text() for p in directory.glob("*.csv")}
    return {"report_tables": {"json": payload, "csv": csvs}}


_STAGE_FNS = {
    "ingest": (_ingest_compute, _ingest_save, _ingest_load),
    "features": (_features_compute, _features_save, _features_load),
    "weights": (_weights_compute, _weights_save, _weights_load),
    "distances": (_distances_compute, _distances_save, _distances_load),
    "cluster": (_cluster_compute, _cluster_save, _cluster_load),
    "stability": (_stability_compute, _stability_save, _stability_load),
    "consensus": (_consensus_compute, _consensus_save, _consensus_load),
    "report": (_report_compute, _report_save, _report_load),
}
