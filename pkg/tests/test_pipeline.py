from __future__ import annotations

import json

import numpy as np
import pytest

from b2bseg.cluster import adjusted_rand_index
from b2bseg.ingest import parse_transactions
from b2bseg.pipeline import RunConfig, RunStore, generate_synthetic, run_pipeline
from b2bseg.pipeline.bench import bench_table, benchmark_consensus
from b2bseg.pipeline.config import STAGES

CYCLIC = [[1.0, 9.0, 1 / 9], [1 / 9, 1.0, 9.0], [9.0, 1 / 9, 1.0]]


@pytest.fixture()
def store(tmp_path):
    return RunStore(tmp_path / "store")


def _run(csv, store, **overrides):
    config = RunConfig().merged(overrides) if overrides else RunConfig()
    return run_pipeline(config, source=csv, store=store)


# -- synthetic generator contracts ---------------------------------------------------


def test_synthetic_counts_double_exactly():
    small = generate_synthetic(100, n_periods=6, k_planted=4, noise=0.3, seed=2)
    large = generate_synthetic(200, n_periods=6, k_planted=4, noise=0.3, seed=2)
    ratio = len(large.records) / len(small.records)
    assert abs(ratio - 2.0) <= 0.01
    # the first 100 customers are identical across the two logs
    prefix = [r for r in large.records if int(r.customer_id[1:]) < 100]
    assert prefix == small.records


def test_synthetic_round_trips_through_parser():
    data = generate_synthetic(24, n_periods=5, k_planted=4, noise=0.2, seed=3)
    records, report = parse_transactions(data.to_csv())
    assert report.rows_dropped == 0
    assert len(records) == len(data.records)


def test_synthetic_preconditions():
    with pytest.raises(ValueError):
        generate_synthetic(10, k_planted=4)  # < 5 per segment
    with pytest.raises(ValueError):
        generate_synthetic(100, k_planted=9)


def test_zero_noise_recovery_through_pipeline(store):
    data = generate_synthetic(40, n_periods=10, k_planted=4, noise=0.0, seed=5)
    artifact = _run(data.to_csv(), store)
    assert artifact.status == "completed"
    assert adjusted_rand_index(artifact.outputs["final_labels"], data.truth) == 1.0


def test_moderate_noise_recovery(store):
    data = generate_synthetic(60, n_periods=12, k_planted=4, noise=0.25, seed=6)
    artifact = _run(data.to_csv(), store)
    assert artifact.status == "completed"
    assert adjusted_rand_index(artifact.outputs["final_labels"], data.truth) >= 0.9


# -- pipeline lifecycle ----------------------------------------------------------------


def test_small_fixture_produces_full_artifact(store):
    data = generate_synthetic(20, n_periods=8, k_planted=4, noise=0.05, seed=1)
    artifact = _run(data.to_csv(), store)
    assert artifact.status == "completed"
    assert [s for s in STAGES if s in artifact.timings] == list(STAGES)
    assert artifact.outputs["chosen"]["k"] == 4
    assert len(np.unique(artifact.outputs["final_labels"])) == 4
    manifest = store.manifest(artifact.run_id)
    assert manifest["status"] == "completed"
    assert all(s["status"] in ("completed", "reused") for s in manifest["stages"])
    tables = artifact.outputs["report_tables"]["json"]
    assert {"grid", "reallocation", "contingency_vs_t", "contingency_vs_s",
            "segment_means", "snake", "transition"} <= set(tables)
    assert len(tables["snake"]["segments"]) == 4


def test_inconsistent_ahp_halts_at_weights_stage(store):
    data = generate_synthetic(20, n_periods=6, k_planted=4, noise=0.1, seed=4)
    artifact = _run(
        data.to_csv(), store,
        weights_mode="flat",
        ahp={"matrix": CYCLIC, "criteria": ["recency", "frequency", "sales"]},
    )
    assert artifact.status == "failed"
    assert artifact.failed_stage == "weights"
    assert "CR=" in artifact.error
    manifest = store.manifest(artifact.run_id)
    assert manifest["failed_stage"] == "weights"
    stage_status = {s["name"]: s["status"] for s in manifest["stages"]}
    assert stage_status["weights"] == "failed"
    assert stage_status["distances"] == "pending"


def test_determinism_across_fresh_stores(tmp_path):
    data = generate_synthetic(30, n_periods=8, k_planted=4, noise=0.3, seed=9)
    a = _run(data.to_csv(), RunStore(tmp_path / "a"))
    b = _run(data.to_csv(), RunStore(tmp_path / "b"))
    assert a.outputs["final_label_table"] == b.outputs["final_label_table"]
    assert a.fingerprints == b.fingerprints


def test_rerun_reuses_all_stages(store):
    data = generate_synthetic(24, n_periods=6, k_planted=4, noise=0.2, seed=8)
    first = _run(data.to_csv(), store)
    second = _run(data.to_csv(), store)
    assert all(second.reused.values())
    assert second.outputs["final_label_table"] == first.outputs["final_label_table"]


def test_stage_isolation_consensus_only(store):
    data = generate_synthetic(24, n_periods=6, k_planted=4, noise=0.2, seed=8)
    _run(data.to_csv(), store)
    changed = _run(data.to_csv(), store, w_t=0.8, w_s=0.2)
    reused = changed.reused
    assert all(reused[s] for s in ("ingest", "features", "weights", "distances",
                                   "cluster", "stability"))
    assert not reused["consensus"] and not reused["report"]


def test_stage_isolation_stability_config(store):
    data = generate_synthetic(24, n_periods=6, k_planted=4, noise=0.2, seed=8)
    _run(data.to_csv(), store)
    changed = _run(data.to_csv(), store,
                   score_weights={"alpha": 1.0, "beta": 0.0, "gamma": 0.0})
    assert all(changed.reused[s] for s in ("ingest", "features", "weights",
                                           "distances", "cluster"))
    assert not changed.reused["stability"]


def test_until_stops_early(store):
    data = generate_synthetic(20, n_periods=6, k_planted=4, noise=0.1, seed=2)
    artifact = run_pipeline(RunConfig(), source=data.to_csv(), store=store, until="features")
    assert artifact.status == "completed"
    assert "raw_panel" in artifact.outputs
    assert "grid_report" not in artifact.outputs


def test_literal_weights_mode(store):
    data = generate_synthetic(20, n_periods=6, k_planted=4, noise=0.1, seed=2)
    from b2bseg.features import FEATURE_NAMES

    literal = {name: 1.0 for name in FEATURE_NAMES}
    artifact = _run(data.to_csv(), store, weights_mode="literal", literal_weights=literal)
    assert artifact.status == "completed"
    weights = artifact.outputs["weights"]
    assert abs(sum(weights.w.values()) - 1.0) <= 1e-9


def test_config_validation_and_unknown_fields():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus_field": 1})
    with pytest.raises(ValueError):
        RunConfig(w_t=0.9, w_s=0.3).validate()
    with pytest.raises(ValueError):
        RunConfig(k_range=[]).validate()


def test_cleaning_report_carries_feature_transforms(store):
    data = generate_synthetic(30, n_periods=8, k_planted=4, noise=0.3, seed=12)
    artifact = run_pipeline(RunConfig(), source=data.to_csv(), store=store, until="features")
    report = artifact.outputs["cleaning_report"]
    report.validate()
    assert set(report.transforms_applied) <= set(report.per_column_skewness)


# -- store --------------------------------------------------------------------------


def test_store_data_roundtrip(store):
    data_id = store.save_data("x,y\n1,2\n")
    assert store.load_data(data_id) == b"x,y\n1,2\n"
    with pytest.raises(FileNotFoundError):
        store.load_data("nope")
    with pytest.raises(FileNotFoundError):
        store.manifest("nope")


# -- benchmark ----------------------------------------------------------------------


def test_benchmark_shape_and_monotonicity():
    rows = benchmark_consensus([400, 1600], seed=0)
    assert [r["n"] for r in rows] == [400, 1600]
    assert rows[1]["seconds"] > rows[0]["seconds"]
    table = bench_table(rows)
    assert table.splitlines()[0] == "n,seconds"
    with pytest.raises(ValueError):
        benchmark_consensus([1000, 500])


# -- cli ----------------------------------------------------------------------------


def test_cli_synth_run_report(tmp_path):
    from click.testing import CliRunner

    from b2bseg.pipeline.cli import main

    runner = CliRunner()
    csv_path = tmp_path / "txns.csv"
    result = runner.invoke(main, ["synth", "--n", "24", "--periods", "6", "--noise", "0.1",
                                  "--out", str(csv_path)])
    assert result.exit_code == 0, result.output
    assert csv_path.exists()

    store_path = tmp_path / "store"
    result = runner.invoke(main, ["run", "--data", str(csv_path), "--store", str(store_path)])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert payload["status"] == "completed"

    out_dir = tmp_path / "report"
    result = runner.invoke(main, ["report", "--run-id", payload["run_id"],
                                  "--store", str(store_path), "--out", str(out_dir)])
    assert result.exit_code == 0, result.output
    assert (out_dir / "grid.csv").exists()
    assert (out_dir / "tables.json").exists()

    result = runner.invoke(main, ["weights"])
    assert result.exit_code == 0
    assert json.loads(result.output)["consistent"] is True

    result = runner.invoke(main, ["bench", "--sizes", "100,200"])
    assert result.exit_code == 0
    assert result.output.startswith("n,seconds")


def test_config_fingerprint_stable_under_reserialization():
    config = RunConfig(seed=7, w_t=0.55, w_s=0.45)
    again = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again.fingerprint() == config.fingerprint()
    for stage in STAGES:
        assert again.stage_fingerprint(stage, "up") == config.stage_fingerprint(stage, "up")


def test_cli_stage_commands(tmp_path):
    from click.testing import CliRunner

    from b2bseg.pipeline.cli import main

    runner = CliRunner()
    csv_path = tmp_path / "txns.csv"
    runner.invoke(main, ["synth", "--n", "20", "--periods", "6", "--noise", "0.1",
                         "--out", str(csv_path)])
    store = str(tmp_path / "store")
    result = runner.invoke(main, ["ingest", "--data", str(csv_path), "--store", store])
    assert result.exit_code == 0 and '"rows_dropped": 0' in result.output
    result = runner.invoke(main, ["consensus", "--data", str(csv_path), "--store", store])
    assert result.exit_code == 0
    assert result.output.startswith("customer_id,segment")
    result = runner.invoke(main, ["stability", "--data", str(csv_path), "--store", store])
    assert result.exit_code == 0 and "volatility" in result.output.splitlines()[0]
    result = runner.invoke(main, ["cluster", "--data", str(csv_path), "--store", store])
    assert result.exit_code == 0 and '"chosen"' in result.output
