"""Clustering over precomputed distance matrices (agglomerative, spectral),
a K-Means baseline on aggregate features, validity indices, and the
method x measure x k grid search."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .tsdist import DistanceMatrix

__all__ = [
    "SegmentationResult",
    "GridRow",
    "GridSearchReport",
    "ParameterError",
    "UndefinedIndexError",
    "SpectralError",
    "GridSearchError",
    "agglomerative",
    "agglomerative_merges",
    "spectral",
    "kmeans_baseline",
    "silhouette_index",
    "calinski_harabasz",
    "calinski_harabasz_euclidean",
    "grid_search",
    "adjusted_rand_index",
]

RFM_SUBSET = ("recency", "frequency", "sales")


class ParameterError(ValueError):
    pass


class UndefinedIndexError(ValueError):
    pass


class SpectralError(RuntimeError):
    pass


class GridSearchError(RuntimeError):
    pass


def _fingerprint(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SegmentationResult:
    labels: np.ndarray
    k: int
    method: str
    measure: str
    silhouette: float
    calinski_harabasz: float
    config_fingerprint: str

    def validate(self) -> None:
        labels = np.asarray(self.labels)
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValueError("labels out of range")
        if len(np.unique(labels)) != self.k:
            raise ValueError("empty cluster")
        if np.isfinite(self.silhouette) and not -1.0 <= self.silhouette <= 1.0 + 1e-12:
            raise ValueError("silhouette out of [-1, 1]")


def _as_matrix(d) -> np.ndarray:
    if isinstance(d, DistanceMatrix):
        return d.d
    return np.asarray(d, dtype=float)


def _measure_of(d) -> str:
    return d.measure if isinstance(d, DistanceMatrix) else "euclidean"


def _indices_or_nan(mat: np.ndarray, labels: np.ndarray, k: int) -> tuple[float, float]:
    n = mat.shape[0]
    si = silhouette_index(mat, labels) if 2 <= k <= n - 1 else float("nan")
    ch = calinski_harabasz(mat, labels) if 2 <= k <= n - 1 else float("nan")
    return si, ch


def _relabel_by_first_member(labels: np.ndarray) -> np.ndarray:
    """Renumber cluster ids 0..k-1 in order of each cluster's first point."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


# -- agglomerative ------------------------------------------------------------


def agglomerative_merges(d, linkage: str = "average") -> list[tuple[int, int, float]]:
    """Full bottom-up merge sequence under Lance-Williams updates.

    Clusters live at the slot of their smallest member; each step merges
    the globally closest active pair, ties broken by the smallest (i, j)
    in lexicographic order. Returns (i, j, distance) per merge.
    """
    if linkage not in ("average", "complete", "single"):
        raise ParameterError(f"unknown linkage {linkage!r}")
    work = _as_matrix(d).astype(float).copy()
    n = work.shape[0]
    np.fill_diagonal(work, np.inf)
    sizes = np.ones(n)
    merges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        dist = float(work[i, j])
        merges.append((i, j, dist))
        if linkage == "average":
            merged = (sizes[i] * work[i] + sizes[j] * work[j]) / (sizes[i] + sizes[j])
        elif linkage == "complete":
            merged = np.maximum(work[i], work[j])
        else:
            merged = np.minimum(work[i], work[j])
        work[i] = merged
        work[:, i] = merged
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        sizes[i] += sizes[j]
    return merges


def _labels_from_merges(merges, n: int, k: int) -> np.ndarray:
    parent = np.arange(n)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in merges[: n - k]:
        parent[find(j)] = find(i)
    roots = np.array([find(x) for x in range(n)])
    return _relabel_by_first_member(roots)


def agglomerative(d, k: int, linkage: str = "average") -> SegmentationResult:
    """Hierarchical agglomerative clustering cut at k clusters.

    Deterministic given the matrix: merge order ties break on the smallest
    pair index. k = n (trivial singletons) is allowed for testing only and
    yields NaN validity indices.
    """
    mat = _as_matrix(d)
    n = mat.shape[0]
    if not 2 <= k <= n:
        raise ParameterError(f"k={k} out of range for n={n}")
    merges = agglomerative_merges(mat, linkage)
    labels = _labels_from_merges(merges, n, k)
    si, ch = _indices_or_nan(mat, labels, k)
    return SegmentationResult(
        labels=labels, k=k, method="hierarchical", measure=_measure_of(d),
        silhouette=si, calinski_harabasz=ch,
        config_fingerprint=_fingerprint(
            {"method": "hierarchical", "linkage": linkage, "k": k, "measure": _measure_of(d)}
        ),
    )


# -- k-means (shared by the spectral embedding and the baseline) --------------


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[c] = X[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r))
        centers[c] = X[min(idx, n - 1)]
        closest = np.minimum(closest, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300):
    centers = _kmeans_pp_init(X, k, rng)
    labels = np.full(X.shape[0], -1)
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            if not np.any(new_labels == c):
                # revive an empty cluster with the worst-assigned point
                point_cost = d2[np.arange(X.shape[0]), new_labels]
                far = int(np.argmax(point_cost))
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return labels, inertia


def _kmeans_best(X: np.ndarray, k: int, seed: int, restarts: int):
    if np.unique(X, axis=0).shape[0] < k:
        raise ParameterError(f"k={k} exceeds the number of distinct rows")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _lloyd(X, k, rng)
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels, inertia
    return _relabel_by_first_member(best_labels), best_inertia


# -- spectral ------------------------------------------------------------------


def spectral(
    d,
    k: int,
    sigma_policy: str = "median",
    sigma: float | None = None,
    seed: int = 42,
    restarts: int = 50,
) -> SegmentationResult:
    """Normalized spectral clustering of a distance matrix.

    Gaussian affinity exp(-d^2 / (2 sigma^2)) with sigma = median
    off-diagonal distance by default (so uniformly rescaling d leaves the
    partition unchanged). Symmetric normalized Laplacian, bottom-k
    eigenvectors, unit-normalized rows, then seeded Lloyd restarts on the
    embedding.
    """
    mat = _as_matrix(d)
    n = mat.shape[0]
    if not 2 <= k <= n - 1:
        raise ParameterError(f"k={k} out of range for n={n}")
    off = mat[~np.eye(n, dtype=bool)]
    if sigma_policy == "median":
        sigma = float(np.median(off))
    elif sigma_policy == "fixed":
        if sigma is None:
            raise ParameterError("fixed sigma policy needs a sigma value")
    else:
        raise ParameterError(f"unknown sigma policy {sigma_policy!r}")
    if not sigma or sigma <= 0:
        raise SpectralError(f"degenerate affinity bandwidth sigma={sigma}")

    affinity = np.exp(-(mat**2) / (2.0 * sigma * sigma))
    np.fill_diagonal(affinity, 0.0)
    if affinity.max() <= 1e-300:
        raise SpectralError(f"affinity collapsed to zero with sigma={sigma}")
    degree = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, 1e-300))
    lap = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    try:
        _, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigendecomposition failed: {exc}") from None
    embed = vecs[:, :k]
    norms = np.sqrt(np.sum(embed**2, axis=1))
    embed = embed / np.maximum(norms, 1e-300)[:, None]
    labels, _ = _kmeans_best(embed, k, seed, restarts)
    si, ch = _indices_or_nan(mat, labels, k)
    return SegmentationResult(
        labels=labels, k=k, method="spectral", measure=_measure_of(d),
        silhouette=si, calinski_harabasz=ch,
        config_fingerprint=_fingerprint(
            {"method": "spectral", "k": k, "sigma_policy": sigma_policy,
             "seed": seed, "measure": _measure_of(d)}
        ),
    )


# -- baselines -----------------------------------------------------------------


def kmeans_baseline(
    features: np.ndarray,
    k: int,
    feature_names=None,
    feature_subset: str = "all",
    weighting: str = "none",
    weight_vector=None,
    seed: int = 42,
    restarts: int = 50,
) -> SegmentationResult:
    """Euclidean K-Means on aggregate features: the standard RFM, fixed
    MCDM, and adaptive-AHP comparison points.

    feature_subset "rfm" keeps recency/frequency/sales only; weighting
    "fixed_equal" gives every feature 0.1 and "ahp" uses the composed
    weight vector.
    """
    X = np.asarray(features, dtype=float)
    names = list(feature_names) if feature_names is not None else [
        f"f{i}" for i in range(X.shape[1])
    ]
    if feature_subset == "rfm":
        keep = [names.index(n) for n in RFM_SUBSET]
    elif feature_subset == "all":
        keep = list(range(X.shape[1]))
    else:
        raise ParameterError(f"unknown feature subset {feature_subset!r}")
    X = X[:, keep]
    kept_names = [names[i] for i in keep]

    if weighting == "none":
        w = np.ones(len(keep))
    elif weighting == "fixed_equal":
        w = np.full(len(keep), 0.1)
    elif weighting == "ahp":
        if weight_vector is None:
            raise ParameterError("ahp weighting needs a weight vector")
        w = weight_vector.as_array(order=kept_names)
    else:
        raise ParameterError(f"unknown weighting {weighting!r}")
    X = X * w[None, :]

    labels, _ = _kmeans_best(X, k, seed, restarts)
    diff = X[:, None, :] - X[None, :, :]
    mat = np.sqrt(np.einsum("ijf,ijf->ij", diff, diff))
    si, ch = _indices_or_nan(mat, labels, k)
    return SegmentationResult(
        labels=labels, k=k, method="kmeans", measure="euclidean",
        silhouette=si, calinski_harabasz=ch,
        config_fingerprint=_fingerprint(
            {"method": "kmeans", "k": k, "subset": feature_subset,
             "weighting": weighting, "seed": seed}
        ),
    )


# -- validity indices ----------------------------------------------------------


def silhouette_index(d, labels) -> float:
    """Mean silhouette width: s = (b - a) / max(a, b) per point, where a is
    the mean intra-cluster distance (excluding self) and b the smallest
    mean distance to another cluster. Singletons contribute 0, as does the
    a = b = 0 degenerate case."""
    mat = _as_matrix(d)
    labels = np.asarray(labels)
    n = mat.shape[0]
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise UndefinedIndexError("silhouette needs at least 2 clusters")
    sums = np.column_stack([mat[:, labels == c].sum(axis=1) for c in uniq])
    counts = np.array([(labels == c).sum() for c in uniq])
    own = np.searchsorted(uniq, labels)
    s = np.zeros(n)
    for p in range(n):
        c = own[p]
        if counts[c] == 1:
            continue
        a = sums[p, c] / (counts[c] - 1)
        b = np.inf
        for q in range(uniq.size):
            if q != c:
                b = min(b, sums[p, q] / counts[q])
        top = max(a, b)
        s[p] = (b - a) / top if top > 0 else 0.0
    return float(s.mean())


def calinski_harabasz(d, labels) -> float:
    """Variance-ratio index in its pairwise-distance form, which stays
    defined for elastic measures where centroids do not exist:

        W = sum_c (1/|C|) * sum_{i,j in C} d(i,j)^2
        B = (1/N) * sum_{i,j} d(i,j)^2 - W
        CH = (N - k)/(k - 1) * B / W
    """
    mat = _as_matrix(d)
    labels = np.asarray(labels)
    n = mat.shape[0]
    uniq = np.unique(labels)
    k = uniq.size
    if k < 2:
        raise UndefinedIndexError("CH needs k >= 2")
    if k >= n:
        raise UndefinedIndexError("CH needs k < n")
    d2 = mat**2
    within = 0.0
    for c in uniq:
        members = labels == c
        within += d2[np.ix_(members, members)].sum() / members.sum()
    between = max(d2.sum() / n - within, 0.0)
    if within == 0.0:
        return float("inf")
    return (n - k) / (k - 1) * between / within


def calinski_harabasz_euclidean(X, labels) -> float:
    """Classical centroid form on raw feature rows; agrees with the
    pairwise form when d is the Euclidean metric on X."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n = X.shape[0]
    uniq = np.unique(labels)
    k = uniq.size
    if k < 2 or k >= n:
        raise UndefinedIndexError("CH needs 2 <= k < n")
    grand = X.mean(axis=0)
    within = 0.0
    between = 0.0
    for c in uniq:
        rows = X[labels == c]
        mu = rows.mean(axis=0)
        within += np.sum((rows - mu) ** 2)
        between += rows.shape[0] * np.sum((mu - grand) ** 2)
    if within == 0.0:
        return float("inf")
    return (n - k) / (k - 1) * between / within


def adjusted_rand_index(a, b) -> float:
    """Permutation-invariant partition agreement; 1 for identical
    partitions, ~0 for independent ones."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label vectors must have equal length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    contingency = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(contingency, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


# -- grid search -----------------------------------------------------------------


@dataclass
class GridRow:
    method: str
    measure: str
    k: int
    silhouette: float = float("nan")
    calinski_harabasz: float = float("nan")
    error: str | None = None
    labels: np.ndarray | None = None


@dataclass
class GridSearchReport:
    rows: list[GridRow] = field(default_factory=list)
    best_by_silhouette: GridRow | None = None
    best_by_ch: GridRow | None = None

    def to_table(self) -> list[dict]:
        return [
            {
                "method": r.method,
                "measure": r.measure,
                "k": r.k,
                "silhouette": r.silhouette,
                "calinski_harabasz": r.calinski_harabasz,
                "error": r.error,
            }
            for r in self.rows
        ]


def grid_search(
    distances: dict[str, DistanceMatrix],
    methods=("hierarchical", "spectral"),
    k_range=(4, 5, 6),
    linkage: str = "average",
    seed: int = 42,
) -> GridSearchReport:
    """Evaluate every method x measure x k combination, scoring each on
    the distance matrix of its own measure. Failures are recorded per row;
    the search only raises if every combination fails."""
    if not methods or not distances or not k_range:
        raise ParameterError("need at least one method, measure, and k")
    report = GridSearchReport()
    for method in methods:
        for measure, dm in distances.items():
            for k in k_range:
                row = GridRow(method=method, measure=measure, k=int(k))
                try:
                    if method == "hierarchical":
                        res = agglomerative(dm, k, linkage=linkage)
                    elif method == "spectral":
                        res = spectral(dm, k, seed=seed)
                    else:
                        raise ParameterError(f"unknown method {method!r}")
                    row.silhouette = res.silhouette
                    row.calinski_harabasz = res.calinski_harabasz
                    row.labels = res.labels
                except Exception as exc:  # recorded, not fatal
                    row.error = f"{type(exc).__name__}: {exc}"
                report.rows.append(row)
    ok = [r for r in report.rows if r.error is None]
    if not ok:
        raise GridSearchError("every grid combination failed")
    sil_ok = [r for r in ok if not np.isnan(r.silhouette)]
    ch_ok = [r for r in ok if not np.isnan(r.calinski_harabasz)]
    # max() keeps the first maximal row, so ties resolve to the earlier row
    report.best_by_silhouette = max(sil_ok, key=lambda r: r.silhouette) if sil_ok else None
    report.best_by_ch = max(ch_ok, key=lambda r: r.calinski_harabasz) if ch_ok else None
    return report
