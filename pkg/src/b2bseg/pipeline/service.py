"""HTTP service for the steering loop: submit data, validate preference
weights, launch and poll runs, fetch stage outputs, and re-run from a
stage with modified downstream config."""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .. import mcdm
from .config import RunConfig
from .runner import run_pipeline
from .store import RunStore

__all__ = ["create_app", "serve"]


class DataUpload(BaseModel):
    csv: str = Field(min_length=1, description="UTF-8 CSV text with a header row")


class WeightsRequest(BaseModel):
    mode: str = Field(default="hierarchical", pattern="^(hierarchical|flat)$")
    criteria: list[str] | None = None
    matrix: list[list[float]] | None = None
    dimension_order: list[str] | None = None
    dimension_matrix: list[list[float]] | None = None
    criterion_matrices: dict[str, dict] | None = None


class RunRequest(BaseModel):
    data_id: str
    config: dict = Field(default_factory=dict)


class RerunRequest(BaseModel):
    config: dict = Field(default_factory=dict)


def _weights_payload(weights: mcdm.WeightVector, criteria: mcdm.CriteriaSet) -> dict:
    known = set(weights.w) <= set(criteria.criteria)
    return {
        "weights": weights.w,
        "consistency_index": weights.consistency_index,
        "consistency_ratio": weights.consistency_ratio,
        "consistent": weights.consistent,
        "dimension_weights": weights.dimension_weights,
        "per_matrix_consistency": {
            name: {"ci": ci, "cr": cr}
            for name, (ci, cr) in weights.per_matrix_consistency.items()
        },
        "dimension_totals": weights.dimension_totals(criteria) if known else None,
    }


def _compute_weights(req: WeightsRequest) -> dict:
    criteria = mcdm.default_criteria_set()
    if req.mode == "flat":
        names = tuple(req.criteria or criteria.criteria)
        if req.matrix is None:
            raise mcdm.MatrixValidationError("flat mode needs a matrix")
        matrix = mcdm.PairwiseMatrix(np.array(req.matrix, dtype=float), names=names)
        weights = mcdm.principal_weights(matrix)
        weights = mcdm.WeightVector(
            w=weights.w, consistency_index=weights.consistency_index,
            consistency_ratio=weights.consistency_ratio, consistent=weights.consistent,
            lambda_max=weights.lambda_max,
            per_matrix_consistency={
                "flat": (weights.consistency_index, weights.consistency_ratio)
            },
        )
        return _weights_payload(weights, criteria)
    dims = tuple(req.dimension_order or criteria.dimensions)
    if req.dimension_matrix is not None:
        dim_matrix = mcdm.PairwiseMatrix(np.array(req.dimension_matrix, dtype=float), names=dims)
    else:
        dim_matrix = mcdm.PairwiseMatrix(np.ones((len(dims), len(dims))), names=dims)
    per_dim = {}
    for dim in dims:
        entry = (req.criterion_matrices or {}).get(dim)
        if entry is None:
            names = criteria.in_dimension(dim)
            per_dim[dim] = mcdm.PairwiseMatrix(np.ones((len(names), len(names))), names=names)
        else:
            per_dim[dim] = mcdm.PairwiseMatrix(
                np.array(entry["matrix"], dtype=float),
                names=tuple(entry.get("criteria", criteria.in_dimension(dim))),
            )
    # the endpoint always reports; the run-time gate does the blocking
    weights = mcdm.hierarchical_compose(dim_matrix, per_dim, criteria, allow_inconsistent=True)
    return _weights_payload(weights, criteria)


def create_app(store_root, frontend_dir: str | None = None) -> FastAPI:
    store = RunStore(store_root)
    app = FastAPI(title="b2bseg", version="0.1.0")
    run_threads: dict[str, threading.Thread] = {}

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/criteria")
    def criteria():
        cs = mcdm.default_criteria_set()
        return {
            "criteria": list(cs.criteria),
            "dimension_of": cs.dimension_of,
            "dimensions": list(cs.dimensions),
        }

    @app.post("/api/data")
    def upload_data(req: DataUpload):
        data_id = store.save_data(req.csv)
        return {"data_id": data_id, "bytes": len(req.csv.encode("utf-8"))}

    @app.post("/api/weights")
    def weights(req: WeightsRequest):
        try:
            return _compute_weights(req)
        except (mcdm.MatrixValidationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail={"error": str(exc)}) from None

    def _launch(config: RunConfig, data_id: str) -> str:
        run_id = store.new_run(config, data_id)
        thread = threading.Thread(
            target=_execute, args=(config, data_id, run_id), daemon=True
        )
        run_threads[run_id] = thread
        thread.start()
        return run_id

    def _execute(config: RunConfig, data_id: str, run_id: str) -> None:
        try:
            run_pipeline(config, data_id=data_id, store=store, run_id=run_id,
                         create_run=False)
        except Exception as exc:  # manifest already carries stage failures
            try:
                store.finish_run(run_id, "failed", error=f"{type(exc).__name__}: {exc}")
            except Exception:
                pass

    @app.post("/api/runs")
    def launch_run(req: RunRequest):
        try:
            store.load_data(req.data_id)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail={"error": f"unknown data_id {req.data_id}"})
        try:
            config = RunConfig.from_dict(req.config)
            config.validate()
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail={"error": str(exc)}) from None
        return {"run_id": _launch(config, req.data_id)}

    @app.get("/api/runs")
    def list_runs():
        return {"runs": store.list_runs()}

    def _manifest_or_404(run_id: str) -> dict:
        try:
            return store.manifest(run_id)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail={"error": f"unknown run_id {run_id}"})

    @app.get("/api/runs/{run_id}")
    def run_status(run_id: str):
        return _manifest_or_404(run_id)

    @app.post("/api/runs/{run_id}/rerun")
    def rerun(run_id: str, req: RerunRequest):
        manifest = _manifest_or_404(run_id)
        try:
            config = RunConfig.from_dict(manifest["config"]).merged(req.config)
            config.validate()
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail={"error": str(exc)}) from None
        return {"run_id": _launch(config, manifest["data_id"])}

    @app.get("/api/runs/{run_id}/output/{stage}")
    def stage_output(run_id: str, stage: str):
        manifest = _manifest_or_404(run_id)
        entry = next((s for s in manifest["stages"] if s["name"] == stage), None)
        if entry is None:
            raise HTTPException(status_code=404, detail={"error": f"unknown stage {stage}"})
        if entry["status"] not in ("completed", "reused"):
            raise HTTPException(
                status_code=409,
                detail={"error": f"stage {stage} is {entry['status']}"},
            )
        return _stage_view(store, stage, entry["fingerprint"])

    @app.get("/api/runs/{run_id}/report")
    def report(run_id: str):
        manifest = _manifest_or_404(run_id)
        entry = next(s for s in manifest["stages"] if s["name"] == "report")
        if entry["status"] not in ("completed", "reused"):
            raise HTTPException(status_code=409, detail={"error": "report not ready"})
        from .runner import _report_load

        return _report_load(store.stage_dir(entry["fingerprint"]))["report_tables"]["json"]

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")
    return app


def _stage_view(store: RunStore, stage: str, fingerprint: str) -> dict:
    from . import runner

    directory = store.stage_dir(fingerprint)
    outputs = runner._STAGE_FNS[stage][2](directory)
    if stage == "ingest":
        return {"cleaning_report": outputs["cleaning_report"].as_dict()}
    if stage == "features":
        corr = outputs["correlation"]
        panel = outputs["scaled_panel"]
        return {
            "cleaning_report": outputs["cleaning_report"].as_dict(),
            "correlation": None if corr is None else {
                "feature_names": list(corr.feature_names),
                "rho": corr.rho.tolist(),
                "constant_features": list(corr.constant_features),
            },
            "customers": panel.customers,
            "periods": panel.periods,
        }
    if stage == "weights":
        weights = outputs["weights"]
        return _weights_payload(weights, outputs["criteria"])
    if stage == "distances":
        return {
            "measures": {m: dm.n for m, dm in outputs["distances"].items()},
        }
    if stage == "cluster":
        return {
            "grid": outputs["grid_report"].to_table(),
            "chosen": outputs["chosen"],
            "labels_t": [int(v) for v in outputs["labels_t"]],
        }
    if stage == "stability":
        return {
            "timelines": {
                tl.customer_id: [int(v) for v in tl.labels] for tl in outputs["timelines"]
            },
            "skipped_periods": outputs["skipped_periods"],
            "transition": outputs["transition"].t.tolist(),
            "profiles": [
                {
                    "customer_id": p.customer_id, "volatility": p.volatility,
                    "continuity": p.continuity,
                    "transition_likelihood": p.transition_likelihood,
                    "segment_score": p.segment_score, "stable_label": p.stable_label,
                }
                for p in outputs["profiles"]
            ],
        }
    if stage == "consensus":
        cp = outputs["consensus_partition"]
        return {
            "final_labels": [int(v) for v in cp.final_labels],
            "label_table": outputs["final_label_table"],
            "modularity": cp.modularity,
            "contingency_vs_t": cp.contingency_vs_t.tolist(),
            "contingency_vs_s": cp.contingency_vs_s.tolist(),
            "pct_change_t": cp.pct_change_t.tolist(),
            "pct_change_s": cp.pct_change_s.tolist(),
            "diagnostics": outputs["consensus_diagnostics"],
        }
    if stage == "report":
        return outputs["report_tables"]["json"]
    raise HTTPException(status_code=404, detail={"error": f"no view for stage {stage}"})


def serve(store_root, host: str = "127.0.0.1", port: int = 8787, frontend_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(store_root, frontend_dir=frontend_dir), host=host, port=port)
