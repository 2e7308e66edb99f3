"""Analytic hierarchy process: pairwise criterion judgments, consistency
checking, and normalized principal-eigenvector weights, flat or composed
over the RFM / Growth / Stability hierarchy."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import FEATURE_DIMENSIONS, FEATURE_NAMES, FeaturePanel

__all__ = [
    "SAATY_RANDOM_INDEX",
    "CriteriaSet",
    "PairwiseMatrix",
    "WeightVector",
    "MatrixValidationError",
    "ConsistencyError",
    "NumericalError",
    "default_criteria_set",
    "principal_weights",
    "hierarchical_compose",
    "apply_weights",
]

# Saaty's random consistency index for matrix orders 1..10.
SAATY_RANDOM_INDEX = (0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49)

CR_LIMIT = 0.1
SAATY_MIN, SAATY_MAX = 1.0 / 9.0, 9.0
_TOL = 1e-9


class MatrixValidationError(ValueError):
    pass


class ConsistencyError(ValueError):
    """A judgment matrix exceeds the acceptable consistency ratio."""


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class CriteriaSet:
    criteria: tuple[str, ...]
    dimension_of: dict[str, str]

    def __post_init__(self):
        if len(set(self.criteria)) != len(self.criteria):
            raise ValueError("criterion names must be unique")
        missing = [c for c in self.criteria if c not in self.dimension_of]
        if missing:
            raise ValueError(f"criteria without a dimension: {missing}")

    @property
    def dimensions(self) -> tuple[str, ...]:
        seen: list[str] = []
        for c in self.criteria:
            d = self.dimension_of[c]
            if d not in seen:
                seen.append(d)
        return tuple(seen)

    def in_dimension(self, dimension: str) -> tuple[str, ...]:
        return tuple(c for c in self.criteria if self.dimension_of[c] == dimension)


def default_criteria_set() -> CriteriaSet:
    return CriteriaSet(criteria=FEATURE_NAMES, dimension_of=dict(FEATURE_DIMENSIONS))


@dataclass(frozen=True)
class PairwiseMatrix:
    """Positive reciprocal judgment matrix on the Saaty scale.

    Entries may be any reals in [1/9, 9] (UI sliders produce intermediate
    values); a_ij * a_ji must equal 1 and the diagonal must be 1.
    """

    a: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    @property
    def order(self) -> int:
        return self.a.shape[0]

    def validate(self) -> None:
        a = self.a
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise MatrixValidationError("matrix must be square")
        if self.names is not None and len(self.names) != a.shape[0]:
            raise MatrixValidationError("names do not match matrix order")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise MatrixValidationError("entries must be positive finite reals")
        if np.any(np.abs(np.diagonal(a) - 1.0) > _TOL):
            raise MatrixValidationError("diagonal must be 1")
        if np.any(np.abs(a * a.T - 1.0) > _TOL):
            raise MatrixValidationError("matrix is not reciprocal (a_ij * a_ji != 1)")
        if np.any(a < SAATY_MIN - _TOL) or np.any(a > SAATY_MAX + _TOL):
            raise MatrixValidationError("entries must lie within the 1/9..9 Saaty scale")

    @classmethod
    def from_weights(cls, weights, names=None) -> "PairwiseMatrix":
        """Consistent-by-construction matrix a_ij = w_i / w_j."""
        w = np.asarray(weights, dtype=float)
        return cls(a=w[:, None] / w[None, :], names=tuple(names) if names else None)

    def to_text(self) -> str:
        """Square text matrix with a criteria-name header row."""
        names = self.names or tuple(f"c{i + 1}" for i in range(self.order))
        lines = ["\t".join(names)]
        lines.extend("\t".join(repr(float(v)) for v in row) for row in self.a)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PairwiseMatrix":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        names = tuple(lines[0].split("\t"))
        rows = [[float(v) for v in ln.split("\t")] for ln in lines[1:]]
        return cls(a=np.array(rows), names=names)


@dataclass(frozen=True)
class WeightVector:
    w: dict[str, float]
    consistency_index: float
    consistency_ratio: float
    consistent: bool
    lambda_max: float = 0.0
    dimension_weights: dict[str, float] = field(default_factory=dict)
    per_matrix_consistency: dict[str, tuple[float, float]] = field(default_factory=dict)

    def as_array(self, order=None) -> np.ndarray:
        names = list(order) if order is not None else list(self.w)
        return np.array([self.w[name] for name in names], dtype=float)

    def dimension_totals(self, criteria: CriteriaSet) -> dict[str, float]:
        totals = {d: 0.0 for d in criteria.dimensions}
        for c, v in self.w.items():
            totals[criteria.dimension_of[c]] += v
        return totals


def _random_index(m: int) -> float:
    if m < 1:
        raise MatrixValidationError("matrix order must be >= 1")
    if m > len(SAATY_RANDOM_INDEX):
        raise MatrixValidationError(f"no random index tabulated for order {m}")
    return SAATY_RANDOM_INDEX[m - 1]


def principal_weights(
    matrix: PairwiseMatrix,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> WeightVector:
    """Normalized principal right eigenvector of a reciprocal matrix via
    power iteration, with Saaty's consistency index and ratio.

    CI = (lambda_max - m) / (m - 1); CR = CI / RI(m). A matrix counts as
    consistent when CR <= 0.1.
    """
    matrix.validate()
    a = matrix.a
    m = a.shape[0]
    names = matrix.names or tuple(f"c{i + 1}" for i in range(m))
    if m == 1:
        return WeightVector(
            w={names[0]: 1.0}, consistency_index=0.0, consistency_ratio=0.0,
            consistent=True, lambda_max=1.0,
        )

    v = np.full(m, 1.0 / m)
    lam = float(m)
    for _ in range(max_iter):
        av = a @ v
        lam = float(av.sum())  # v sums to 1, so ||Av||_1 estimates lambda_max
        v_new = av / lam
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    else:
        raise NumericalError(f"power iteration did not converge in {max_iter} steps")

    ci = max(0.0, (lam - m) / (m - 1))
    ri = _random_index(m)
    cr = ci / ri if ri > 0 else 0.0
    return WeightVector(
        w={name: float(weight) for name, weight in zip(names, v)},
        consistency_index=ci,
        consistency_ratio=cr,
        consistent=cr <= CR_LIMIT,
        lambda_max=lam,
    )


def hierarchical_compose(
    dimension_matrix: PairwiseMatrix,
    per_dimension_matrices: dict[str, PairwiseMatrix],
    criteria: CriteriaSet | None = None,
    allow_inconsistent: bool = False,
) -> WeightVector:
    """Compose two-level weights: weight(criterion) = weight(its dimension)
    times its within-dimension weight. The composed vector sums to 1.

    Any sub-matrix with CR > 0.1 is rejected (named, with its ratio) unless
    explicitly overridden, mirroring the preference-adjustment gate.
    """
    criteria = criteria or default_criteria_set()
    dims = dimension_matrix.names or criteria.dimensions
    if set(dims) != set(criteria.dimensions):
        raise MatrixValidationError(
            f"dimension matrix covers {dims}, criteria need {criteria.dimensions}"
        )
    covered: list[str] = []
    for dim in dims:
        if dim not in per_dimension_matrices:
            raise MatrixValidationError(f"missing judgment matrix for dimension {dim!r}")
        sub = per_dimension_matrices[dim]
        sub_names = sub.names or criteria.in_dimension(dim)
        if set(sub_names) != set(criteria.in_dimension(dim)):
            raise MatrixValidationError(
                f"dimension {dim!r} matrix covers {sub_names}, "
                f"expected {criteria.in_dimension(dim)}"
            )
        covered.extend(sub_names)
    if sorted(covered) != sorted(criteria.criteria):
        raise MatrixValidationError("criteria are not covered exactly once")

    dim_named = replace(dimension_matrix, names=tuple(dims))
    dim_weights = principal_weights(dim_named)
    per_matrix = {"dimensions": (dim_weights.consistency_index, dim_weights.consistency_ratio)}
    if not dim_weights.consistent and not allow_inconsistent:
        raise ConsistencyError(
            f"dimension matrix has CR={dim_weights.consistency_ratio:.4f} > {CR_LIMIT}; "
            "adjust preferences or override"
        )

    composed: dict[str, float] = {}
    for dim in dims:
        sub = per_dimension_matrices[dim]
        sub_named = replace(sub, names=sub.names or criteria.in_dimension(dim))
        sub_weights = principal_weights(sub_named)
        per_matrix[dim] = (sub_weights.consistency_index, sub_weights.consistency_ratio)
        if not sub_weights.consistent and not allow_inconsistent:
            raise ConsistencyError(
                f"matrix for {dim!r} has CR={sub_weights.consistency_ratio:.4f} > {CR_LIMIT}; "
                "adjust preferences or override"
            )
        for crit, wv in sub_weights.w.items():
            composed[crit] = dim_weights.w[dim] * wv

    ordered = {c: composed[c] for c in criteria.criteria}
    worst = max(per_matrix.values(), key=lambda pair: pair[1])
    return WeightVector(
        w=ordered,
        consistency_index=worst[0],
        consistency_ratio=worst[1],
        consistent=worst[1] <= CR_LIMIT,
        dimension_weights=dict(dim_weights.w),
        per_matrix_consistency=per_matrix,
    )


def apply_weights(panel: FeaturePanel, weights: WeightVector) -> FeaturePanel:
    """Multiply each feature plane (and aggregate column) by its weight."""
    if set(weights.w) != set(panel.feature_names):
        raise MatrixValidationError(
            "weight criteria do not match panel features: "
            f"{sorted(set(weights.w) ^ set(panel.feature_names))}"
        )
    w = weights.as_array(order=panel.feature_names)
    return replace(
        panel,
        values=panel.values * w[None, None, :],
        aggregates=panel.aggregates * w[None, :],
    )
