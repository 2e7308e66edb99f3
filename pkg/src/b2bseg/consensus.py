"""Consensus of the time-series and stability partitions: a weighted
label-agreement graph, Leiden community detection over it, reconciliation
to the target segment count, and the contingency / reallocation reports.

The Leiden implementation is self-contained: queue-based local moving,
a refinement phase that only merges nodes along actual edges (so every
refined community, and hence every returned community, is internally
connected), and aggregation until quality stops improving.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "AgreementGraph",
    "ConsensusPartition",
    "GraphInputError",
    "DegenerateGraphError",
    "ReconciliationError",
    "build_agreement_graph",
    "leiden_communities",
    "modularity",
    "reconcile_to_k",
    "align_partitions",
    "consensus_report",
]

_EPS = 1e-15


class GraphInputError(ValueError):
    pass


class DegenerateGraphError(ValueError):
    pass


class ReconciliationError(RuntimeError):
    def __init__(self, message: str, achieved: int):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class AgreementGraph:
    """Sparse undirected customer graph; edge (i, j) carries
    w_t * [same time-series cluster] + w_s * [same stability cluster].
    Pairs agreeing in neither partition get no edge."""

    n: int
    edges: np.ndarray  # (E, 2) with i < j
    weights: np.ndarray  # (E,)
    w_t: float
    w_s: float

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def _co_membership_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All i < j pairs sharing a label, vectorized per cluster."""
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    boundaries = np.flatnonzero(np.diff(sorted_labels)) + 1
    groups = np.split(order, boundaries)
    out_i, out_j = [], []
    for members in groups:
        if members.size < 2:
            continue
        members = np.sort(members)
        a, b = np.triu_indices(members.size, 1)
        out_i.append(members[a])
        out_j.append(members[b])
    if not out_i:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    return np.concatenate(out_i), np.concatenate(out_j)


def build_agreement_graph(labels_t, labels_s, w_t: float = 0.6, w_s: float = 0.4) -> AgreementGraph:
    labels_t = np.asarray(labels_t)
    labels_s = np.asarray(labels_s)
    if labels_t.shape != labels_s.shape:
        raise GraphInputError("label vectors must have equal length")
    if w_t < 0 or w_s < 0 or abs(w_t + w_s - 1.0) > 1e-9:
        raise GraphInputError("weights must be non-negative and sum to 1")
    n = labels_t.size
    keys, wts = [], []
    for labels, w in ((labels_t, w_t), (labels_s, w_s)):
        if w <= 0:
            continue
        ii, jj = _co_membership_pairs(labels)
        keys.append(ii.astype(np.int64) * n + jj)
        wts.append(np.full(ii.size, w))
    if keys:
        key = np.concatenate(keys)
        wt = np.concatenate(wts)
        uniq, inverse = np.unique(key, return_inverse=True)
        weight = np.bincount(inverse, weights=wt)
        edges = np.column_stack([uniq // n, uniq % n]).astype(np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
        weight = np.empty(0)
    return AgreementGraph(n=n, edges=edges, weights=weight, w_t=w_t, w_s=w_s)


# -- Leiden ------------------------------------------------------------------


class _Level:
    """One aggregation level: edge list plus CSR adjacency and strengths."""

    __slots__ = ("n", "edges", "weights", "self_loops", "indptr", "indices", "data",
                 "strength", "total")

    def __init__(self, n: int, edges: np.ndarray, weights: np.ndarray, self_loops: np.ndarray):
        self.n = n
        self.edges = edges
        self.weights = weights
        self.self_loops = self_loops
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        dat = np.concatenate([weights, weights])
        order = np.argsort(src, kind="stable")
        self.indices = dst[order]
        self.data = dat[order]
        counts = np.bincount(src, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)])
        self.strength = np.bincount(src, weights=dat, minlength=n) + 2.0 * self_loops
        self.total = float(weights.sum() + self_loops.sum())


def _renumber(labels: np.ndarray) -> np.ndarray:
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        lab = int(lab)
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def _level_modularity(level: _Level, comms: np.ndarray, resolution: float) -> float:
    m = level.total
    a, b = level.edges[:, 0], level.edges[:, 1]
    intra = comms[a] == comms[b]
    n_comms = int(comms.max()) + 1 if comms.size else 0
    e_c = np.bincount(comms[a[intra]], weights=level.weights[intra], minlength=n_comms)
    e_c = e_c + np.bincount(comms, weights=level.self_loops, minlength=n_comms)
    d_c = np.bincount(comms, weights=level.strength, minlength=n_comms)
    return float(np.sum(e_c / m - resolution * (d_c / (2.0 * m)) ** 2))


def _local_move(level: _Level, comms: np.ndarray, rng, resolution: float) -> int:
    """Queue-based single-node moves to the neighboring community with the
    best modularity gain; nodes may also split off into a vacant community
    when every join has negative gain."""
    n = level.n
    m2 = 2.0 * level.total
    comm_tot = np.bincount(comms, weights=level.strength, minlength=n)
    comm_size = np.bincount(comms, minlength=n)
    vacant = [c for c in range(n - 1, -1, -1) if comm_size[c] == 0]
    scratch = np.zeros(n)
    queue = deque(int(v) for v in rng.permutation(n))
    queued = np.ones(n, dtype=bool)
    moves = 0
    guard = 0
    max_steps = 200 * n + 10_000
    while queue and guard < max_steps:
        guard += 1
        v = queue.popleft()
        queued[v] = False
        cv = int(comms[v])
        k_v = level.strength[v]
        lo, hi = level.indptr[v], level.indptr[v + 1]
        nbrs = level.indices[lo:hi]
        wts = level.data[lo:hi]
        comm_tot[cv] -= k_v
        ncomms = comms[nbrs]
        np.add.at(scratch, ncomms, wts)
        cand = np.unique(np.append(ncomms, cv))
        gains = scratch[cand] - resolution * k_v * comm_tot[cand] / m2
        best_idx = int(np.argmax(gains))
        best_gain = gains[best_idx]
        gain_stay = float(gains[np.searchsorted(cand, cv)])
        scratch[ncomms] = 0.0
        if gain_stay >= best_gain - _EPS:
            target = cv
        else:
            target = int(cand[best_idx])
        if best_gain < -_EPS and comm_size[cv] > 1 and vacant:
            target = vacant.pop()  # better off alone
        if target == cv:
            comm_tot[cv] += k_v
            continue
        comms[v] = target
        comm_tot[target] += k_v
        comm_size[cv] -= 1
        comm_size[target] += 1
        if comm_size[cv] == 0:
            vacant.append(cv)
        moves += 1
        for u in nbrs:
            u = int(u)
            if not queued[u] and comms[u] != target:
                queue.append(u)
                queued[u] = True
    return moves


def _refine(level: _Level, comms: np.ndarray, rng, resolution: float) -> np.ndarray:
    """Partition each community into well-connected refined communities:
    starting from singletons, a still-isolated node may merge into a
    refined community inside its own community when the modularity gain is
    positive and an actual edge connects them."""
    n = level.n
    m2 = 2.0 * level.total
    refined = np.arange(n)
    ref_tot = level.strength.copy()
    ref_size = np.ones(n, dtype=np.int64)
    scratch = np.zeros(n)
    for v in rng.permutation(n):
        v = int(v)
        rv = int(refined[v])
        if ref_size[rv] > 1:
            continue
        lo, hi = level.indptr[v], level.indptr[v + 1]
        nbrs = level.indices[lo:hi]
        wts = level.data[lo:hi]
        mask = comms[nbrs] == comms[v]
        nbrs, wts = nbrs[mask], wts[mask]
        if nbrs.size == 0:
            continue
        rcomms = refined[nbrs]
        np.add.at(scratch, rcomms, wts)
        cand = np.unique(rcomms)
        cand = cand[cand != rv]
        if cand.size:
            k_v = level.strength[v]
            gains = scratch[cand] - resolution * k_v * (ref_tot[cand]) / m2
            best_idx = int(np.argmax(gains))
            if gains[best_idx] > _EPS:
                target = int(cand[best_idx])
                refined[v] = target
                ref_tot[target] += k_v
                ref_tot[rv] -= k_v
                ref_size[target] += 1
                ref_size[rv] -= 1
        scratch[rcomms] = 0.0
    return _renumber(refined)


def _aggregate(level: _Level, refined: np.ndarray, comms: np.ndarray):
    n2 = int(refined.max()) + 1
    a = refined[level.edges[:, 0]]
    b = refined[level.edges[:, 1]]
    self_mask = a == b
    self_loops = np.bincount(refined, weights=level.self_loops, minlength=n2)
    if self_mask.any():
        self_loops += np.bincount(a[self_mask], weights=level.weights[self_mask], minlength=n2)
    lo = np.minimum(a[~self_mask], b[~self_mask])
    hi = np.maximum(a[~self_mask], b[~self_mask])
    if lo.size:
        key = lo.astype(np.int64) * n2 + hi
        uniq, inverse = np.unique(key, return_inverse=True)
        weights = np.bincount(inverse, weights=level.weights[~self_mask])
        edges = np.column_stack([uniq // n2, uniq % n2]).astype(np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
        weights = np.empty(0)
    # every member of a refined community shares one parent community
    parent = np.zeros(n2, dtype=np.int64)
    parent[refined] = comms
    return _Level(n2, edges, weights, self_loops), _renumber(parent)


def leiden_communities(
    g: AgreementGraph,
    resolution: float = 1.0,
    seed: int = 0,
    max_levels: int = 50,
    refine: bool = True,
) -> tuple[np.ndarray, float]:
    """Leiden community detection on a weighted agreement graph.

    Returns contiguous community labels and the weighted modularity
    Q = sum_c (e_c / m - resolution * (d_c / 2m)^2). Deterministic under a
    fixed seed; every returned community is internally connected.
    ``refine=False`` skips the refinement phase and aggregates on the
    moved partition directly, which is classic Louvain.
    """
    if g.n == 0:
        raise DegenerateGraphError("empty graph")
    if g.total_weight <= 0:
        raise DegenerateGraphError("graph has zero total edge weight")
    rng = np.random.default_rng(seed)
    level = _Level(g.n, g.edges.copy(), g.weights.copy(), np.zeros(g.n))
    node_map = np.arange(g.n)
    comms = np.arange(level.n)
    for _ in range(max_levels):
        moves = _local_move(level, comms, rng, resolution)
        comms = _renumber(comms)
        n_comms = int(comms.max()) + 1
        if moves == 0 or n_comms == level.n:
            break
        refined = _refine(level, comms, rng, resolution) if refine else comms
        if int(refined.max()) + 1 == level.n and n_comms == level.n:
            break
        level, new_comms = _aggregate(level, refined, comms)
        node_map = refined[node_map]
        comms = new_comms
    final = _renumber(comms[node_map])
    base = _Level(g.n, g.edges, g.weights, np.zeros(g.n))
    return final, _level_modularity(base, final, resolution)


def modularity(g: AgreementGraph, labels, resolution: float = 1.0) -> float:
    """Weighted modularity of an arbitrary partition of the graph."""
    labels = _renumber(np.asarray(labels))
    level = _Level(g.n, g.edges, g.weights, np.zeros(g.n))
    return _level_modularity(level, labels, resolution)


def community_connected(g: AgreementGraph, labels) -> bool:
    """True when every community induces a connected subgraph."""
    labels = np.asarray(labels)
    parent = np.arange(g.n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in g.edges:
        if labels[i] == labels[j]:
            parent[find(int(i))] = find(int(j))
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        roots = {find(int(v)) for v in members}
        if len(roots) > 1:
            return False
    return True


# -- reconciliation and reporting ---------------------------------------------


def _merge_densest_pair(labels: np.ndarray, g: AgreementGraph) -> np.ndarray:
    count = int(labels.max()) + 1
    sizes = np.bincount(labels, minlength=count).astype(float)
    inter = np.zeros((count, count))
    a = labels[g.edges[:, 0]]
    b = labels[g.edges[:, 1]]
    off = a != b
    np.add.at(inter, (np.minimum(a[off], b[off]), np.maximum(a[off], b[off])), g.weights[off])
    density = inter / np.outer(sizes, sizes)
    density[np.tril_indices(count)] = -np.inf
    flat = int(np.argmax(density))  # row-major ties resolve to smallest (a, b)
    i, j = divmod(flat, count)
    merged = labels.copy()
    merged[merged == j] = i
    return _renumber(merged)


def reconcile_to_k(
    communities,
    target_k: int,
    g: AgreementGraph,
    resolution: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Force the community count to the target segment count.

    Too many communities: repeatedly merge the pair with the highest
    inter-community weight density. Too few: re-run Leiden with the
    resolution doubled (up to 6 times) until at least target_k communities
    appear, then merge down.
    """
    if target_k < 2:
        raise ValueError("target_k must be >= 2")
    labels = _renumber(np.asarray(communities))
    count = int(labels.max()) + 1
    if count < target_k:
        res = resolution
        for _ in range(6):
            res *= 2.0
            candidate, _ = leiden_communities(g, resolution=res, seed=seed)
            if int(candidate.max()) + 1 >= target_k:
                labels = candidate
                count = int(labels.max()) + 1
                break
        else:
            raise ReconciliationError(
                f"could not reach {target_k} communities "
                f"(achieved {count} after resolution ladder)", achieved=count,
            )
    while count > target_k:
        labels = _merge_densest_pair(labels, g)
        count = int(labels.max()) + 1
    return labels


def align_partitions(reference, labels, k: int) -> np.ndarray:
    """Relabel ``labels`` to maximize overlap with ``reference`` via
    Hungarian assignment on the k x k overlap-count matrix."""
    reference = np.asarray(reference)
    labels = np.asarray(labels)
    overlap = np.zeros((k, k), dtype=np.int64)
    np.add.at(overlap, (labels, reference), 1)
    rows, cols = linear_sum_assignment(-overlap)
    mapping = np.arange(k)
    mapping[rows] = cols
    return mapping[labels]


@dataclass
class ConsensusPartition:
    final_labels: np.ndarray
    modularity: float
    contingency_vs_t: np.ndarray  # rows: final segment, cols: source segment
    contingency_vs_s: np.ndarray
    pct_change_t: np.ndarray  # per final segment: movers-in / final size * 100
    pct_change_s: np.ndarray
    sizes_final: np.ndarray
    sizes_t: np.ndarray
    sizes_s: np.ndarray


def _contingency(final: np.ndarray, source: np.ndarray, k: int) -> np.ndarray:
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (final, source), 1)
    return table


def _pct_movers(contingency: np.ndarray) -> np.ndarray:
    final_sizes = contingency.sum(axis=1)
    movers = final_sizes - np.diagonal(contingency)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(final_sizes > 0, 100.0 * movers / final_sizes, 0.0)
    return pct


def consensus_report(final, labels_t, labels_s, modularity_q: float = float("nan")) -> ConsensusPartition:
    """Contingency matrices of the final segments against both source
    partitions, plus per-segment reallocation percentages.

    The primary percentage is customers whose source segment differs from
    their final one, relative to the final segment size (always within
    [0, 100]); the exported reallocation table additionally carries the
    net size change under both denominators, explicitly labeled.
    """
    final = np.asarray(final)
    labels_t = np.asarray(labels_t)
    labels_s = np.asarray(labels_s)
    if not (final.shape == labels_t.shape == labels_s.shape):
        raise GraphInputError("all three labelings must have equal length")
    k = int(max(final.max(), labels_t.max(), labels_s.max())) + 1
    cont_t = _contingency(final, labels_t, k)
    cont_s = _contingency(final, labels_s, k)
    return ConsensusPartition(
        final_labels=final,
        modularity=modularity_q,
        contingency_vs_t=cont_t,
        contingency_vs_s=cont_s,
        pct_change_t=_pct_movers(cont_t),
        pct_change_s=_pct_movers(cont_s),
        sizes_final=np.bincount(final, minlength=k),
        sizes_t=np.bincount(labels_t, minlength=k),
        sizes_s=np.bincount(labels_s, minlength=k),
    )
