from __future__ import annotations

import numpy as np
import pytest

from b2bseg.cluster import (
    GridSearchError,
    ParameterError,
    UndefinedIndexError,
    adjusted_rand_index,
    agglomerative,
    agglomerative_merges,
    calinski_harabasz,
    calinski_harabasz_euclidean,
    grid_search,
    kmeans_baseline,
    silhouette_index,
    spectral,
)
from b2bseg.tsdist import DistanceMatrix
from oracles import (
    ari_direct,
    calinski_harabasz_direct,
    ch_euclidean_direct,
    linkage_merges_direct,
    silhouette_direct,
)


def _blob_distances(sizes, gap=10.0, jitter=0.1, seed=0):
    """Distance matrix of well-separated 1-d blobs."""
    rng = np.random.default_rng(seed)
    points = np.concatenate(
        [rng.uniform(0, jitter, size=s) + i * gap for i, s in enumerate(sizes)]
    )
    labels = np.concatenate([np.full(s, i) for i, s in enumerate(sizes)])
    d = np.abs(points[:, None] - points[None, :])
    return d, labels


# -- agglomerative ------------------------------------------------------------


def test_agglomerative_recovers_separated_blobs():
    d, truth = _blob_distances([5, 7])
    res = agglomerative(d, 2)
    assert adjusted_rand_index(res.labels, truth) == 1.0
    res.validate()


def test_agglomerative_k_equals_n_singletons():
    d, _ = _blob_distances([3, 3])
    res = agglomerative(d, 6)
    assert sorted(res.labels.tolist()) == list(range(6))
    assert np.isnan(res.silhouette)


def test_agglomerative_k_out_of_range():
    d, _ = _blob_distances([3, 3])
    with pytest.raises(ParameterError):
        agglomerative(d, 1)
    with pytest.raises(ParameterError):
        agglomerative(d, 7)


@pytest.mark.parametrize("linkage", ["average", "complete", "single"])
def test_merge_sequence_matches_naive_oracle(linkage):
    rng = np.random.default_rng(99)
    for _ in range(8):
        n = 8
        points = rng.normal(size=(n, 3))
        d = np.sqrt(((points[:, None] - points[None]) ** 2).sum(-1))
        got = agglomerative_merges(d, linkage)
        want = linkage_merges_direct(d.tolist(), linkage)
        assert [(i, j) for i, j, _ in got] == [(i, j) for i, j, _ in want]
        assert np.allclose([m[2] for m in got], [m[2] for m in want], atol=1e-9)


def test_agglomerative_deterministic():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(12, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    a = agglomerative(d, 3)
    b = agglomerative(d, 3)
    assert np.array_equal(a.labels, b.labels)
    assert agglomerative_merges(d) == agglomerative_merges(d)


# -- spectral -----------------------------------------------------------------


def test_spectral_recovers_two_blocks():
    d, truth = _blob_distances([6, 6], gap=50.0)
    res = spectral(d, 2, seed=7)
    assert adjusted_rand_index(res.labels, truth) == 1.0


def test_spectral_scale_invariant_with_median_sigma():
    d, _ = _blob_distances([5, 6, 5], gap=20.0, seed=3)
    a = spectral(d, 3, seed=11)
    b = spectral(d * 37.5, 3, seed=11)
    assert adjusted_rand_index(a.labels, b.labels) == 1.0


def test_spectral_matches_dense_eigendecomposition_oracle():
    # ring versus blob: distances crafted so the diffusion structure, not
    # raw proximity, separates them; the oracle rebuilds the embedding with
    # explicit loops and clusters it the same way
    rng = np.random.default_rng(5)
    n_ring, n_blob = 10, 8
    ring_angles = np.linspace(0, 2 * np.pi, n_ring, endpoint=False)
    ring = np.column_stack([np.cos(ring_angles), np.sin(ring_angles)]) * 5.0
    blob = rng.normal(scale=0.2, size=(n_blob, 2)) + np.array([20.0, 0.0])
    pts = np.vstack([ring, blob])
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    res = spectral(d, 2, seed=13)

    sigma = float(np.median(d[~np.eye(len(d), dtype=bool)]))
    n = len(d)
    affinity = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                affinity[i, j] = np.exp(-d[i, j] ** 2 / (2 * sigma**2))
    deg = affinity.sum(axis=1)
    lap = np.eye(n) - affinity / np.sqrt(np.outer(deg, deg))
    _, vecs = np.linalg.eigh(lap)
    embed = vecs[:, :2]
    embed = embed / np.linalg.norm(embed, axis=1, keepdims=True)
    from b2bseg.cluster import _kmeans_best

    oracle_labels, _ = _kmeans_best(embed, 2, seed=13, restarts=50)
    assert adjusted_rand_index(res.labels, oracle_labels) == 1.0


def test_spectral_parameter_checks():
    d, _ = _blob_distances([4, 4])
    with pytest.raises(ParameterError):
        spectral(d, 1)
    with pytest.raises(ParameterError):
        spectral(d, 2, sigma_policy="fixed")


# -- kmeans baseline -------------------------------------------------------------


def _feature_blobs(seed=2):
    rng = np.random.default_rng(seed)
    names = ("recency", "frequency", "sales", "volume")
    a = rng.normal(0.0, 0.2, size=(10, 4))
    b = rng.normal(5.0, 0.2, size=(12, 4))
    X = np.vstack([a, b])
    truth = np.array([0] * 10 + [1] * 12)
    return X, truth, names


def test_kmeans_recovers_blobs():
    X, truth, names = _feature_blobs()
    res = kmeans_baseline(X, 2, feature_names=names, seed=9)
    assert adjusted_rand_index(res.labels, truth) == 1.0
    res.validate()


def test_kmeans_k_exceeding_distinct_rows():
    X = np.zeros((6, 3))
    X[3:] = 1.0
    with pytest.raises(ParameterError):
        kmeans_baseline(X, 3)


def test_kmeans_rfm_subset_and_weightings():
    X, truth, names = _feature_blobs()
    rfm = kmeans_baseline(X, 2, feature_names=names, feature_subset="rfm", seed=9)
    fixed = kmeans_baseline(X, 2, feature_names=names, weighting="fixed_equal", seed=9)
    from b2bseg.mcdm import PairwiseMatrix, principal_weights

    wv = principal_weights(PairwiseMatrix.from_weights([0.4, 0.3, 0.2, 0.1], names=names))
    ahp = kmeans_baseline(X, 2, feature_names=names, weighting="ahp", weight_vector=wv, seed=9)
    for res in (rfm, fixed, ahp):
        assert -1.0 <= res.silhouette <= 1.0
        assert res.calinski_harabasz >= 0.0
    with pytest.raises(ParameterError):
        kmeans_baseline(X, 2, feature_names=names, weighting="ahp")


def test_kmeans_deterministic_under_seed():
    X, _, names = _feature_blobs(seed=8)
    a = kmeans_baseline(X, 2, feature_names=names, seed=4)
    b = kmeans_baseline(X, 2, feature_names=names, seed=4)
    assert np.array_equal(a.labels, b.labels)


# -- validity indices ----------------------------------------------------------------


def test_silhouette_far_blobs_near_one():
    d, labels = _blob_distances([8, 8], gap=100.0)
    assert silhouette_index(d, labels) > 0.9


def test_silhouette_identical_points_zero():
    d = np.zeros((6, 6))
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert silhouette_index(d, labels) == 0.0


def test_silhouette_singletons_contribute_zero():
    d, _ = _blob_distances([4, 1])
    labels = np.array([0, 0, 0, 0, 1])
    si = silhouette_index(d, labels)
    assert si == pytest.approx(silhouette_direct(d.tolist(), labels.tolist()), abs=1e-12)


def test_silhouette_single_cluster_undefined():
    d, _ = _blob_distances([4])
    with pytest.raises(UndefinedIndexError):
        silhouette_index(d, np.zeros(4, dtype=int))


def test_indices_match_naive_oracles_on_random_cases():
    rng = np.random.default_rng(15)
    for _ in range(40):
        n = int(rng.integers(8, 50))
        k = int(rng.integers(2, 5))
        pts = rng.normal(size=(n, 3))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        labels = rng.integers(0, k, size=n)
        while len(np.unique(labels)) < 2:
            labels = rng.integers(0, k, size=n)
        assert silhouette_index(d, labels) == pytest.approx(
            silhouette_direct(d.tolist(), labels.tolist()), abs=1e-12
        )
        assert calinski_harabasz(d, labels) == pytest.approx(
            calinski_harabasz_direct(d.tolist(), labels.tolist()), rel=1e-9
        )


def test_ch_pairwise_equals_euclidean_variance_form():
    rng = np.random.default_rng(30)
    X = rng.normal(size=(30, 5))
    labels = rng.integers(0, 3, size=30)
    d = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    pairwise = calinski_harabasz(d, labels)
    euclid_form = calinski_harabasz_euclidean(X, labels)
    assert pairwise == pytest.approx(euclid_form, rel=1e-6)
    assert euclid_form == pytest.approx(ch_euclidean_direct(X, labels), rel=1e-9)


def test_ch_k_bounds():
    d, _ = _blob_distances([4, 4])
    with pytest.raises(UndefinedIndexError):
        calinski_harabasz(d, np.zeros(8, dtype=int))
    with pytest.raises(UndefinedIndexError):
        calinski_harabasz(d, np.arange(8))


def test_indices_invariant_under_relabeling():
    rng = np.random.default_rng(44)
    pts = rng.normal(size=(20, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    labels = rng.integers(0, 3, size=20)
    perm = np.array([2, 0, 1])
    si_a, si_b = silhouette_index(d, labels), silhouette_index(d, perm[labels])
    ch_a, ch_b = calinski_harabasz(d, labels), calinski_harabasz(d, perm[labels])
    assert si_a == pytest.approx(si_b, abs=1e-12)
    assert ch_a == pytest.approx(ch_b, abs=1e-12 * max(1.0, ch_a))


def test_index_scaling_behavior():
    rng = np.random.default_rng(45)
    pts = rng.normal(size=(18, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    labels = rng.integers(0, 3, size=18)
    c = 7.5
    assert silhouette_index(d * c, labels) == pytest.approx(
        silhouette_index(d, labels), abs=1e-12
    )
    assert calinski_harabasz(d * c, labels) == pytest.approx(
        calinski_harabasz(d, labels), rel=1e-12
    )  # the c^2 factors cancel in the B/W ratio; CH is scale-free too


def test_ari_against_pair_counting_oracle():
    rng = np.random.default_rng(55)
    for _ in range(10):
        a = rng.integers(0, 4, size=25)
        b = rng.integers(0, 3, size=25)
        assert adjusted_rand_index(a, b) == pytest.approx(
            ari_direct(a.tolist(), b.tolist()), abs=1e-12
        )
    x = rng.integers(0, 4, size=30)
    assert adjusted_rand_index(x, x) == 1.0
    assert adjusted_rand_index(x, (x + 1) % 4) == 1.0  # permutation invariant


# -- grid search ------------------------------------------------------------------


def _grid_distances(seed=0):
    d, truth = _blob_distances([10, 10, 10, 10], gap=25.0, jitter=1.0, seed=seed)
    return {
        "cid": DistanceMatrix(d=d, measure="cid"),
        "dtw": DistanceMatrix(d=d * 1.3, measure="dtw"),
        "cort": DistanceMatrix(d=d * 0.7, measure="cort"),
    }, truth


def test_grid_search_single_combination():
    distances, _ = _grid_distances()
    report = grid_search({"cid": distances["cid"]}, methods=("hierarchical",), k_range=(4,))
    assert len(report.rows) == 1
    assert report.best_by_silhouette is report.rows[0]
    assert report.best_by_ch is report.rows[0]


def test_grid_search_shape_matches_method_measure_layout():
    distances, _ = _grid_distances()
    report = grid_search(distances, k_range=(4, 5, 6))
    assert len(report.rows) == 2 * 3 * 3  # 6 method x measure rows, 3 k each
    table = report.to_table()
    assert {row["method"] for row in table} == {"hierarchical", "spectral"}
    assert {row["measure"] for row in table} == {"cid", "dtw", "cort"}


def test_grid_search_selects_planted_k():
    distances, truth = _grid_distances(seed=7)
    report = grid_search(distances, k_range=(4, 5, 6), seed=11)
    best = report.best_by_silhouette
    assert best.k == 4
    assert adjusted_rand_index(best.labels, truth) == 1.0


def test_grid_search_records_per_row_failures():
    d = np.zeros((6, 6))  # degenerate: spectral collapses, sigma = 0
    distances = {"cid": DistanceMatrix(d=d, measure="cid")}
    report = grid_search(distances, methods=("hierarchical", "spectral"), k_range=(2,))
    spectral_rows = [r for r in report.rows if r.method == "spectral"]
    assert all(r.error is not None for r in spectral_rows)
    with pytest.raises(GridSearchError):
        grid_search(distances, methods=("spectral",), k_range=(2,))


def test_kmeans_adaptive_weighting_beats_rfm_on_planted_aggregates():
    # aggregate features where the signal lives in growth/stability
    # criteria; judgments tuned toward those criteria (the adaptive story)
    # must not score below the RFM-only view
    from b2bseg.features import FEATURE_NAMES, build_panel, scale_panel
    from b2bseg.mcdm import PairwiseMatrix, default_criteria_set, hierarchical_compose
    from b2bseg.pipeline.synth import generate_synthetic

    criteria = default_criteria_set()
    dim_matrix = PairwiseMatrix.from_weights([0.1, 0.45, 0.45], names=criteria.dimensions)
    per_dim = {
        "RFM": PairwiseMatrix(np.ones((3, 3)), names=criteria.in_dimension("RFM")),
        "Growth": PairwiseMatrix.from_weights([1, 1, 5, 5],
                                              names=criteria.in_dimension("Growth")),
        "Stability": PairwiseMatrix.from_weights([1, 1, 5],
                                                 names=criteria.in_dimension("Stability")),
    }
    wv = hierarchical_compose(dim_matrix, per_dim, criteria)
    wins = 0
    for seed in range(5):
        data = generate_synthetic(60, n_periods=8, k_planted=4, noise=0.3,
                                  seed=300 + seed, signal="growth_stability")
        panel = scale_panel(build_panel(data.records, as_of=data.as_of))
        ahp = kmeans_baseline(panel.aggregates, 4, feature_names=FEATURE_NAMES,
                              weighting="ahp", weight_vector=wv, seed=1)
        rfm = kmeans_baseline(panel.aggregates, 4, feature_names=FEATURE_NAMES,
                              feature_subset="rfm", seed=1)
        if ahp.silhouette >= rfm.silhouette:
            wins += 1
    assert wins >= 4
