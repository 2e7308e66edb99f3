"""Time-series dissimilarity kernels (DTW, CID, CORT) and their weighted
aggregation into a customer x customer distance matrix.

The scalar kernels are straightforward transcriptions of the formulas and
are the reference path; ``panel_distance`` uses batched implementations
vectorized over customer pairs, which the tests pin against the scalar
kernels.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .features import FeaturePanel

__all__ = [
    "MEASURES",
    "DistanceMatrix",
    "SeriesInputError",
    "DegenerateMatrixError",
    "dtw",
    "cid",
    "cort",
    "cort_dissim",
    "euclidean",
    "panel_distance",
    "save_matrix",
    "load_matrix",
]

MEASURES = ("dtw", "cid", "cort", "euclidean")
COMPLEXITY_FLOOR = 1e-12  # CE floor so the CID factor stays finite


class SeriesInputError(ValueError):
    pass


class DegenerateMatrixError(ValueError):
    pass


def _as_series(x, min_len: int = 2) -> np.ndarray:
    s = np.asarray(x, dtype=float)
    if s.ndim != 1 or s.size < min_len:
        raise SeriesInputError(f"need a 1-d series of length >= {min_len}")
    if not np.all(np.isfinite(s)):
        raise SeriesInputError("series values must be finite")
    return s


def euclidean(x, y) -> float:
    x, y = _as_series(x), _as_series(y)
    if x.size != y.size:
        raise SeriesInputError("series lengths must match")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def dtw(x, y, squared: bool = False) -> float:
    """Dynamic time warping alignment cost.

    Step set {(1,0),(0,1),(1,1)}, local cost |x_i - y_j| (squared behind
    the flag), no window constraint; returns the minimal cumulative cost
    over all monotone warping paths.
    """
    x, y = _as_series(x), _as_series(y)
    n, m = x.size, y.size
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(n):
        cur = np.full(m + 1, np.inf)
        for j in range(m):
            c = abs(x[i] - y[j])
            if squared:
                c = c * c
            cur[j + 1] = c + min(prev[j + 1], cur[j], prev[j])
        prev = cur
    return float(prev[m])


def complexity(x) -> float:
    """CE(x) = sqrt of the summed squared first differences."""
    s = _as_series(x)
    return float(np.sqrt(np.sum(np.diff(s) ** 2)))


def cid(x, y) -> float:
    """Complexity-invariant distance: Euclidean distance scaled by
    max(CE)/min(CE), with CE floored at 1e-12 so constant series stay
    finite (two constant series get factor 1)."""
    x, y = _as_series(x), _as_series(y)
    if x.size != y.size:
        raise SeriesInputError("series lengths must match")
    ce_x = max(complexity(x), COMPLEXITY_FLOOR)
    ce_y = max(complexity(y), COMPLEXITY_FLOOR)
    factor = max(ce_x, ce_y) / min(ce_x, ce_y)
    return factor * euclidean(x, y)


def cort(x, y) -> float:
    """Temporal correlation of first differences, in [-1, 1]; defined as 0
    when either series has no increments."""
    x, y = _as_series(x), _as_series(y)
    if x.size != y.size:
        raise SeriesInputError("series lengths must match")
    dx, dy = np.diff(x), np.diff(y)
    nx = float(np.sqrt(dx @ dx))
    ny = float(np.sqrt(dy @ dy))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.clip(dx @ dy / (nx * ny), -1.0, 1.0))


def cort_dissim(x, y, k_tuning: float = 2.0) -> float:
    """CORT dissimilarity with the exponential adaptive tuning:
    [2 / (1 + exp(k * CORT))] * d_euclidean. k = 0 reduces to the plain
    Euclidean distance."""
    return 2.0 / (1.0 + np.exp(k_tuning * cort(x, y))) * euclidean(x, y)


@dataclass
class DistanceMatrix:
    d: np.ndarray
    measure: str
    per_feature: dict[str, np.ndarray] | None = None

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def validate(self, tol: float = 1e-9) -> None:
        d = self.d
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DegenerateMatrixError("distance matrix must be square")
        if np.any(d < -tol):
            raise DegenerateMatrixError("negative distances")
        if np.max(np.abs(np.diagonal(d))) > tol:
            raise DegenerateMatrixError("diagonal must be zero")
        if np.max(np.abs(d - d.T)) > tol:
            raise DegenerateMatrixError("matrix must be symmetric")


# -- batched kernels (vectorized over the i<j pair list) --------------------


def _pair_euclidean(X: np.ndarray, ii, jj) -> np.ndarray:
    diff = X[ii] - X[jj]
    return np.sqrt(np.einsum("pt,pt->p", diff, diff))


def _pair_dtw(X: np.ndarray, ii, jj, squared: bool) -> np.ndarray:
    xa, xb = X[ii], X[jj]
    P, T = xa.shape
    prev = np.full((P, T + 1), np.inf)
    prev[:, 0] = 0.0
    cur = np.empty((P, T + 1))
    for a in range(T):
        cur[:, 0] = np.inf
        col_a = xa[:, a]
        for b in range(T):
            c = np.abs(col_a - xb[:, b])
            if squared:
                c = c * c
            np.minimum(prev[:, b + 1], cur[:, b], out=cur[:, b + 1])
            np.minimum(cur[:, b + 1], prev[:, b], out=cur[:, b + 1])
            cur[:, b + 1] += c
        prev, cur = cur, prev
    return prev[:, T].copy()


def _pair_cid(X: np.ndarray, ii, jj) -> np.ndarray:
    ce = np.sqrt(np.sum(np.diff(X, axis=1) ** 2, axis=1))
    ce = np.maximum(ce, COMPLEXITY_FLOOR)
    hi = np.maximum(ce[ii], ce[jj])
    lo = np.minimum(ce[ii], ce[jj])
    return hi / lo * _pair_euclidean(X, ii, jj)


def _pair_cort(X: np.ndarray, ii, jj, k_tuning: float) -> np.ndarray:
    dX = np.diff(X, axis=1)
    norms = np.sqrt(np.einsum("pt,pt->p", dX, dX))
    dots = np.einsum("pt,pt->p", dX[ii], dX[jj])
    denom = norms[ii] * norms[jj]
    coeff = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 0.0)
    coeff = np.clip(coeff, -1.0, 1.0)
    return 2.0 / (1.0 + np.exp(k_tuning * coeff)) * _pair_euclidean(X, ii, jj)


def _pairwise(X: np.ndarray, measure: str, k_tuning: float, squared_dtw: bool) -> np.ndarray:
    n = X.shape[0]
    ii, jj = np.triu_indices(n, 1)
    if measure == "dtw":
        vals = _pair_dtw(X, ii, jj, squared_dtw)
    elif measure == "cid":
        vals = _pair_cid(X, ii, jj)
    elif measure == "cort":
        vals = _pair_cort(X, ii, jj, k_tuning)
    elif measure == "euclidean":
        vals = _pair_euclidean(X, ii, jj)
    else:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    d = np.zeros((n, n))
    d[ii, jj] = vals
    d[jj, ii] = vals
    return d


def _weight_array(weights, feature_names) -> np.ndarray:
    m = len(feature_names)
    if weights is None:
        return np.full(m, 1.0 / m)
    if hasattr(weights, "as_array"):  # WeightVector
        return weights.as_array(order=feature_names)
    if isinstance(weights, dict):
        return np.array([weights[name] for name in feature_names], dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"expected {m} weights, got shape {w.shape}")
    return w


def panel_distance(
    panel: FeaturePanel,
    measure: str = "dtw",
    weights=None,
    k_tuning: float = 2.0,
    squared_dtw: bool = False,
    keep_per_feature: bool = False,
) -> DistanceMatrix:
    """Customer x customer distance over a scaled panel:
    d[i,j] = sum over features of w_f * measure(series_f(i), series_f(j)).

    Weights enter here, at aggregation, and the series themselves stay
    unweighted; ``weights=None`` means uniform 1/m. Doubling all weights
    doubles every entry, so argmin-based assignments are unaffected.
    """
    n = panel.n_customers
    if n < 2:
        raise DegenerateMatrixError("need at least 2 customers")
    if panel.n_periods < 2:
        raise SeriesInputError("need at least 2 periods per series")
    w = _weight_array(weights, panel.feature_names)
    total = np.zeros((n, n))
    per_feature: dict[str, np.ndarray] = {}
    for f, name in enumerate(panel.feature_names):
        d_f = _pairwise(panel.values[:, :, f], measure, k_tuning, squared_dtw)
        if keep_per_feature:
            per_feature[name] = d_f
        total += w[f] * d_f
    dm = DistanceMatrix(d=total, measure=measure, per_feature=per_feature or None)
    dm.validate()
    return dm


# -- serialization -----------------------------------------------------------

_MAGIC = b"DMTX"


def save_matrix(dm: DistanceMatrix, path) -> None:
    """Binary row-major layout with a small header: magic, n, measure tag,
    and a crc32 checksum of the payload."""
    payload = np.ascontiguousarray(dm.d, dtype="<f8").tobytes()
    tag = dm.measure.encode("ascii")[:8].ljust(8, b"\0")
    header = _MAGIC + struct.pack("<I8sI", dm.n, tag, zlib.crc32(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_matrix(path) -> DistanceMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError("not a distance-matrix file")
    n, tag, checksum = struct.unpack("<I8sI", blob[4:20])
    payload = blob[20:]
    if zlib.crc32(payload) != checksum:
        raise ValueError("checksum mismatch")
    d = np.frombuffer(payload, dtype="<f8").reshape(n, n).copy()
    return DistanceMatrix(d=d, measure=tag.rstrip(b"\0").decode("ascii"))


def matrix_to_text(dm: DistanceMatrix) -> str:
    buf = io.StringIO()
    buf.write(f"# measure={dm.measure} n={dm.n}\n")
    for row in dm.d:
        buf.write("\t".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def matrix_from_text(text: str) -> DistanceMatrix:
    lines = [ln for ln in text.strip().splitlines() if ln]
    head = lines[0].lstrip("# ").split()
    meta = dict(part.split("=") for part in head)
    rows = [[float(v) for v in ln.split("\t")] for ln in lines[1:]]
    return DistanceMatrix(d=np.array(rows), measure=meta["measure"])
