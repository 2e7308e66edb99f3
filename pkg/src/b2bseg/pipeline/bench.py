"""Timing harness for the consensus path (graph construction plus Leiden)
on synthetic partitions of growing size."""

from __future__ import annotations

import time

import numpy as np

from ..consensus import build_agreement_graph, leiden_communities

__all__ = ["benchmark_consensus", "bench_table"]


def _synthetic_partitions(n: int, k: int, agreement: float, rng) -> tuple[np.ndarray, np.ndarray]:
    labels_t = rng.integers(0, k, size=n)
    labels_s = labels_t.copy()
    flips = rng.random(n) > agreement
    labels_s[flips] = rng.integers(0, k, size=int(flips.sum()))
    return labels_t, labels_s


def benchmark_consensus(
    sizes,
    k: int = 4,
    agreement: float = 0.8,
    w_t: float = 0.6,
    w_s: float = 0.4,
    seed: int = 0,
    repeats: int = 1,
) -> list[dict]:
    """End-to-end consensus timing per size: build the agreement graph and
    run Leiden on it. Sizes must be ascending; with repeats > 1 the best
    of the repeated measurements is kept (less scheduler noise)."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    _time_once(200, k, agreement, w_t, w_s, seed)  # warm caches and allocators
    rows = []
    for n in sizes:
        best = min(_time_once(int(n), k, agreement, w_t, w_s, seed) for _ in range(repeats))
        rows.append({"n": int(n), "seconds": best})
    return rows


def _time_once(n, k, agreement, w_t, w_s, seed) -> float:
    rng = np.random.default_rng([seed, n])
    labels_t, labels_s = _synthetic_partitions(n, k, agreement, rng)
    start = time.perf_counter()
    graph = build_agreement_graph(labels_t, labels_s, w_t=w_t, w_s=w_s)
    leiden_communities(graph, seed=seed)
    return time.perf_counter() - start


def bench_table(rows: list[dict]) -> str:
    lines = ["n,seconds"]
    lines.extend(f"{row['n']},{row['seconds']:.4f}" for row in rows)
    return "\n".join(lines) + "\n"
