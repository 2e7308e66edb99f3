"""Command-line entry points: one subcommand per pipeline stage plus run,
synth, bench, serve, and report."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import bench_table, benchmark_consensus
from .config import RunConfig
from .runner import run_pipeline
from .store import RunStore
from .synth import generate_synthetic


def _load_config(path: str | None, overrides: dict) -> RunConfig:
    data = json.loads(Path(path).read_text()) if path else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def _store(path: str | None) -> RunStore:
    return RunStore(path or "./b2bseg-store")


common = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="Run config JSON; flags override its fields."),
    click.option("--store", "store_path", type=click.Path(), default=None,
                 help="Run store directory (default ./b2bseg-store)."),
    click.option("--seed", type=int, default=None),
]


def _with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Temporal multi-criteria B2B customer segmentation."""


def _run_until(data, config_path, store_path, seed, until):
    config = _load_config(config_path, {"seed": seed})
    artifact = run_pipeline(config, source=Path(data), store=_store(store_path), until=until)
    if artifact.status == "failed":
        click.echo(f"run {artifact.run_id} failed at {artifact.failed_stage}: {artifact.error}",
                   err=True)
        sys.exit(1)
    return artifact


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@_with_common
def run(data, config_path, store_path, seed):
    """Execute the full pipeline and print the run summary."""
    artifact = _run_until(data, config_path, store_path, seed, until=None)
    click.echo(json.dumps({
        "run_id": artifact.run_id,
        "status": artifact.status,
        "chosen": artifact.outputs["chosen"],
        "timings": {k: round(v, 3) for k, v in artifact.timings.items()},
        "diagnostics": artifact.outputs["consensus_diagnostics"],
    }, indent=2))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@_with_common
def ingest(data, config_path, store_path, seed):
    """Parse and clean a transaction log; print the cleaning report."""
    artifact = _run_until(data, config_path, store_path, seed, until="ingest")
    click.echo(json.dumps(artifact.outputs["cleaning_report"].as_dict(), indent=2))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write the panel CSV here.")
@_with_common
def features(data, out, config_path, store_path, seed):
    """Build the feature panel; print or write its columnar export."""
    artifact = _run_until(data, config_path, store_path, seed, until="features")
    text = artifact.outputs["raw_panel"].to_csv()
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@_with_common
def weights(config_path, store_path, seed):
    """Compute the criterion weights from the configured judgments."""
    from .. import mcdm
    from .runner import _weights_compute

    config = _load_config(config_path, {"seed": seed})
    out = _weights_compute({"config": config})
    wv = out["weights"]
    click.echo(json.dumps({
        "weights": wv.w,
        "consistency_index": wv.consistency_index,
        "consistency_ratio": wv.consistency_ratio,
        "consistent": wv.consistent,
        "dimension_totals": wv.dimension_totals(mcdm.default_criteria_set()),
    }, indent=2))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@_with_common
def cluster(data, config_path, store_path, seed):
    """Run the grid search; print the grid table and the chosen config."""
    artifact = _run_until(data, config_path, store_path, seed, until="cluster")
    click.echo(json.dumps({
        "grid": artifact.outputs["grid_report"].to_table(),
        "chosen": artifact.outputs["chosen"],
    }, indent=2))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@_with_common
def stability(data, config_path, store_path, seed):
    """Per-period segmentation and stability profiles (CSV to stdout)."""
    from ..stability import profiles_to_csv

    artifact = _run_until(data, config_path, store_path, seed, until="stability")
    click.echo(profiles_to_csv(artifact.outputs["timelines"], artifact.outputs["profiles"]),
               nl=False)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@_with_common
def consensus(data, config_path, store_path, seed):
    """Consensus partition: final label table to stdout."""
    artifact = _run_until(data, config_path, store_path, seed, until="consensus")
    click.echo(artifact.outputs["final_label_table"], nl=False)


@main.command()
@click.option("--run-id", required=True)
@click.option("--out", type=click.Path(), default="./report")
@_with_common
def report(run_id, out, config_path, store_path, seed):
    """Write all report tables of a completed run to a directory."""
    from .runner import _report_load

    store = _store(store_path)
    manifest = store.manifest(run_id)
    entry = next(s for s in manifest["stages"] if s["name"] == "report")
    if entry["status"] not in ("completed", "reused"):
        click.echo(f"run {run_id} has no completed report stage", err=True)
        sys.exit(1)
    tables = _report_load(store.stage_dir(entry["fingerprint"]))["report_tables"]
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tables.json").write_text(json.dumps(tables["json"], indent=2))
    for name, text in tables["csv"].items():
        (out_dir / f"{name}.csv").write_text(text)
    click.echo(f"wrote {len(tables['csv']) + 1} files to {out_dir}")


@main.command()
@click.option("--n", type=int, default=200)
@click.option("--periods", type=int, default=24)
@click.option("--k", type=int, default=4)
@click.option("--noise", type=float, default=0.2)
@click.option("--seed", type=int, default=7)
@click.option("--signal", type=click.Choice(["all", "growth_stability"]), default="all")
@click.option("--out", type=click.Path(), default="synthetic.csv")
def synth(n, periods, k, noise, seed, signal, out):
    """Generate a planted-structure synthetic transaction log."""
    data = generate_synthetic(n, n_periods=periods, k_planted=k, noise=noise,
                              seed=seed, signal=signal)
    Path(out).write_text(data.to_csv())
    truth_path = Path(out).with_suffix(".truth.csv")
    truth_path.write_text(
        "customer_id,segment\n"
        + "\n".join(f"C{i:05d},{int(lab)}" for i, lab in enumerate(data.truth))
        + "\n"
    )
    click.echo(f"wrote {len(data.records)} transactions to {out} (truth: {truth_path})")


@main.command()
@click.option("--sizes", default="1000,2000", help="Comma-separated ascending sizes.")
@click.option("--seed", type=int, default=0)
def bench(sizes, seed):
    """Time the consensus stage over synthetic partitions."""
    rows = benchmark_consensus([int(s) for s in sizes.split(",")], seed=seed)
    click.echo(bench_table(rows), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8787)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--frontend", type=click.Path(), default=None,
              help="Directory with the built UI to serve at /.")
def serve(host, port, store_path, frontend):
    """Start the HTTP service."""
    from .service import serve as _serve

    _serve(store_path or "./b2bseg-store", host=host, port=port, frontend_dir=frontend)


if __name__ == "__main__":
    main()
