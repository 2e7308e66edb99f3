"""Temporal stability: per-period re-clustering with cross-period label
alignment, volatility / continuity / transition statistics, and the
weighted segment score that picks each customer's stable label."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cluster import agglomerative, spectral
from .features import FeaturePanel
from .tsdist import panel_distance

__all__ = [
    "LabelTimeline",
    "TransitionMatrix",
    "ScoreWeights",
    "StabilityProfile",
    "TimelineError",
    "per_period_segmentation",
    "volatility",
    "continuity",
    "transition_model",
    "segment_score",
]


class TimelineError(ValueError):
    pass


@dataclass(frozen=True)
class LabelTimeline:
    customer_id: str
    labels: np.ndarray  # per-period segment ids, length T


@dataclass
class TransitionMatrix:
    t: np.ndarray  # k x k row-stochastic
    counts: np.ndarray  # raw transition counts
    uniform_rows: tuple[int, ...] = ()  # rows with no observations, filled 1/k

    @property
    def k(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("score weights must be non-negative")
        if self.alpha + self.beta + self.gamma == 0:
            raise ValueError("score weights must not all be zero")

    def normalized(self) -> tuple[float, float, float]:
        total = self.alpha + self.beta + self.gamma
        return self.alpha / total, self.beta / total, self.gamma / total


@dataclass(frozen=True)
class StabilityProfile:
    customer_id: str
    volatility: float
    continuity: float
    transition_likelihood: float
    segment_score: float
    stable_label: int


def _align_labels(prev: np.ndarray, cur: np.ndarray, k: int) -> np.ndarray:
    """Map current-period cluster ids onto the previous period's ids by
    maximum-overlap Hungarian matching, so ids stay comparable over time."""
    overlap = np.zeros((k, k), dtype=np.int64)
    np.add.at(overlap, (cur, prev), 1)
    rows, cols = linear_sum_assignment(-overlap)
    mapping = np.arange(k)
    mapping[rows] = cols
    return mapping[cur]


def _cluster_window(panel, method, measure, k, weights, k_tuning, linkage, seed):
    dm = panel_distance(panel, measure=measure, weights=weights, k_tuning=k_tuning)
    if method == "hierarchical":
        return agglomerative(dm, k, linkage=linkage).labels
    if method == "spectral":
        return spectral(dm, k, seed=seed).labels
    raise ValueError(f"unknown method {method!r}")


def per_period_segmentation(
    panel: FeaturePanel,
    method: str,
    measure: str,
    k: int,
    weights=None,
    window_policy: str = "expanding",
    window: int = 12,
    activity: np.ndarray | None = None,
    k_tuning: float = 2.0,
    linkage: str = "average",
    seed: int = 42,
) -> tuple[list[LabelTimeline], list[int]]:
    """Cluster customers once per period on the trailing window ending at
    that period, aligning labels across consecutive periods.

    Periods whose window is too short, or with fewer than k active
    customers (``activity`` is a customers x periods boolean mask), are
    flagged and carry the neighboring labels forward. Returns the
    timelines plus the flagged period indices.
    """
    if window_policy not in ("expanding", "sliding"):
        raise ValueError(f"unknown window policy {window_policy!r}")
    n, T = panel.n_customers, panel.n_periods
    matrix = np.full((n, T), -1, dtype=int)
    skipped: list[int] = []
    prev_labels: np.ndarray | None = None
    for t in range(T):
        lo = 0 if window_policy == "expanding" else max(0, t + 1 - window)
        if t + 1 - lo < 2:
            skipped.append(t)
            continue
        if activity is not None:
            active = int(activity[:, lo : t + 1].any(axis=1).sum())
            if active < k:
                skipped.append(t)
                continue
        labels = _cluster_window(
            panel.slice_periods(lo, t + 1),
            method, measure, k, weights, k_tuning, linkage, seed,
        )
        if prev_labels is not None:
            labels = _align_labels(prev_labels, labels, k)
        matrix[:, t] = labels
        prev_labels = labels
    if prev_labels is None:
        raise TimelineError("no period had enough data to cluster")

    # carry labels into flagged periods: forward fill, backfill the head
    for t in range(1, T):
        if matrix[0, t] == -1 and matrix[0, t - 1] != -1:
            matrix[:, t] = matrix[:, t - 1]
    for t in range(T - 2, -1, -1):
        if matrix[0, t] == -1:
            matrix[:, t] = matrix[:, t + 1]

    timelines = [
        LabelTimeline(customer_id=cust, labels=matrix[i].copy())
        for i, cust in enumerate(panel.customers)
    ]
    return timelines, skipped


def volatility(timeline) -> float:
    """Fraction of consecutive periods where the label changes: changes
    divided by T - 1, so the range is exactly [0, 1]."""
    labels = timeline.labels if isinstance(timeline, LabelTimeline) else np.asarray(timeline)
    if labels.size < 2:
        raise TimelineError("volatility needs at least 2 periods")
    changes = int(np.sum(labels[1:] != labels[:-1]))
    return changes / (labels.size - 1)


def continuity(timeline) -> float:
    """Mean run length of unchanged labels divided by T. Constant
    timelines score 1; a fully alternating one scores 1/T."""
    labels = timeline.labels if isinstance(timeline, LabelTimeline) else np.asarray(timeline)
    if labels.size < 1:
        raise TimelineError("continuity needs at least 1 period")
    runs: list[int] = []
    run = 1
    for a, b in zip(labels[:-1], labels[1:]):
        if a == b:
            run += 1
        else:
            runs.append(run)
            run = 1
    runs.append(run)
    return float(np.mean(runs)) / labels.size


def transition_model(timelines: list[LabelTimeline], k: int) -> TransitionMatrix:
    """Pool segment-to-segment transitions over all customers and
    consecutive period pairs; rows with no observations become uniform
    and are flagged."""
    counts = np.zeros((k, k), dtype=np.int64)
    for tl in timelines:
        a, b = tl.labels[:-1], tl.labels[1:]
        np.add.at(counts, (a, b), 1)
    totals = counts.sum(axis=1)
    t = np.empty((k, k), dtype=float)
    uniform: list[int] = []
    for i in range(k):
        if totals[i] == 0:
            t[i] = 1.0 / k
            uniform.append(i)
        else:
            t[i] = counts[i] / totals[i]
    return TransitionMatrix(t=t, counts=counts, uniform_rows=tuple(uniform))


def _stable_label(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    best = counts.max()
    modal = values[counts == best]
    # tie: the modal label seen most recently wins
    last_seen = {int(v): int(np.max(np.flatnonzero(labels == v))) for v in modal}
    return max(last_seen, key=lambda v: last_seen[v])


def segment_score(
    timeline: LabelTimeline,
    tm: TransitionMatrix,
    weights: ScoreWeights = ScoreWeights(),
) -> StabilityProfile:
    """Score = alpha * continuity + beta * (1 - volatility) + gamma *
    transitions, with the weights normalized to sum 1.

    The transitions term is the mean pooled-model likelihood of the
    customer's observed path, rewarding movement that follows dominant
    population flows. The stable label is the modal label with a
    most-recent tie break.
    """
    labels = timeline.labels
    vol = volatility(timeline)
    cont = continuity(timeline)
    steps = tm.t[labels[:-1], labels[1:]]
    trans = float(steps.mean()) if steps.size else 0.0
    alpha, beta, gamma = weights.normalized()
    score = alpha * cont + beta * (1.0 - vol) + gamma * trans
    return StabilityProfile(
        customer_id=timeline.customer_id,
        volatility=vol,
        continuity=cont,
        transition_likelihood=trans,
        segment_score=score,
        stable_label=_stable_label(labels),
    )


def profiles_to_csv(timelines: list[LabelTimeline], profiles: list[StabilityProfile]) -> str:
    """Delimited export consumed by the UI heatmap."""
    T = timelines[0].labels.size if timelines else 0
    header = (
        ["customer_id"]
        + [f"p{t}" for t in range(T)]
        + ["volatility", "continuity", "transitions", "segment_score", "stable_label"]
    )
    lines = [",".join(header)]
    for tl, prof in zip(timelines, profiles):
        row = (
            [tl.customer_id]
            + [str(int(v)) for v in tl.labels]
            + [
                repr(float(prof.volatility)),
                repr(float(prof.continuity)),
                repr(float(prof.transition_likelihood)),
                repr(float(prof.segment_score)),
                str(int(prof.stable_label)),
            ]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
