"""Orchestration: run lifecycle, persistence, synthetic data, benchmarks,
CLI, and the HTTP service."""

from .bench import benchmark_consensus  # noqa: F401
from .config import STAGES, RunConfig  # noqa: F401
from .runner import RunArtifact, run_pipeline  # noqa: F401
from .store import RunStore  # noqa: F401
from .synth import generate_synthetic  # noqa: F401
