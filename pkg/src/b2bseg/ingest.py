"""Transaction log ingestion: parse, validate, de-duplicate, and profile
raw delimited sales data into canonical records.

Also hosts the distribution utilities (moment computation, skew-reducing
transforms) that the feature stage reuses.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime

import numpy as np

__all__ = [
    "TransactionRecord",
    "CleaningReport",
    "Transform",
    "ConfigurationError",
    "FormatError",
    "DegenerateInputError",
    "TransformDomainError",
    "REQUIRED_COLUMNS",
    "parse_transactions",
    "compute_moments",
    "make_transform",
    "apply_transform",
    "select_transform",
]

# Logical column names the parser needs; a format config maps each of these
# to the physical header name in the input file.
REQUIRED_COLUMNS = (
    "customer",
    "fiscal",
    "created_on",
    "bill_date",
    "product_group",
    "distribution_channel",
    "weight",
    "sales",
    "cost",
)

DEFAULT_COLUMN_MAP = {name: name for name in REQUIRED_COLUMNS}

BOX_COX_LAMBDA_GRID = tuple(round(-2.0 + 0.25 * i, 2) for i in range(17))


class ConfigurationError(ValueError):
    """A format config or parameter does not match the input."""


class FormatError(ValueError):
    """The input stream cannot be interpreted as a delimited table."""


class DegenerateInputError(ValueError):
    """Too few values, or no variance, for a distribution statistic."""


class TransformDomainError(ValueError):
    """Values outside the domain of the requested transform."""


@dataclass(frozen=True)
class TransactionRecord:
    """One cleaned sales line.

    fiscal_period is the company-defined YYYYMM integer and is taken
    verbatim from the input, never derived from the dates.
    """

    customer_id: str
    fiscal_period: int
    created_on: date
    bill_date: date
    product_group: str
    distribution_channel: str
    weight_tons: float
    sales_value: float
    cost_value: float

    @property
    def profit(self) -> float:
        return self.sales_value - self.cost_value


@dataclass
class CleaningReport:
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)
    per_column_skewness: dict[str, float] = field(default_factory=dict)
    per_column_kurtosis: dict[str, float] = field(default_factory=dict)
    transforms_applied: dict[str, str] = field(default_factory=dict)

    def record_drop(self, reason: str) -> None:
        self.rows_dropped += 1
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + 1

    def validate(self) -> None:
        if self.rows_read != self.rows_kept + self.rows_dropped:
            raise ValueError("row counts do not add up")
        if sum(self.drop_reasons.values()) != self.rows_dropped:
            raise ValueError("per-reason counts do not sum to rows_dropped")
        missing = set(self.transforms_applied) - set(self.per_column_skewness)
        if missing:
            raise ValueError(f"transformed columns lack skewness entries: {sorted(missing)}")

    def as_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_dropped": self.rows_dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "per_column_skewness": self.per_column_skewness,
            "per_column_kurtosis": self.per_column_kurtosis,
            "transforms_applied": self.transforms_applied,
        }


def _decode(source) -> str:
    if isinstance(source, str):
        return source
    if isinstance(source, (bytes, bytearray)):
        try:
            return source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not valid UTF-8: {exc}") from None
    if hasattr(source, "read"):
        return _decode(source.read())
    raise TypeError(f"unsupported source type: {type(source)!r}")


def _parse_fiscal(raw: str) -> int:
    period = int(raw)
    month = period % 100
    if not 1 <= month <= 12:
        raise ValueError("invalid month")
    if period < 100:
        raise ValueError("missing year")
    return period


def _parse_date(raw: str) -> date:
    return datetime.strptime(raw.strip(), "%Y-%m-%d").date()


def _parse_number(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def parse_transactions(
    source,
    format_config: dict[str, str] | None = None,
    delimiter: str = ",",
) -> tuple[list[TransactionRecord], CleaningReport]:
    """Parse a delimited transaction table into validated records.

    Rows that fail a type or invariant check are counted in the report
    under a reason code, never silently dropped. Exact duplicate rows are
    dropped with reason "duplicate". Empty input yields an empty list and
    a zeroed report.
    """
    column_map = dict(DEFAULT_COLUMN_MAP)
    if format_config:
        column_map.update(format_config)
    text = _decode(source)
    if not text.strip():
        return [], CleaningReport()

    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except (StopIteration, csv.Error) as exc:
        raise FormatError(f"cannot read header row: {exc}") from None
    if not any(cell.strip() for cell in header):
        raise FormatError("header row is blank")

    positions: dict[str, int] = {}
    stripped = [cell.strip() for cell in header]
    for logical in REQUIRED_COLUMNS:
        physical = column_map[logical]
        if physical not in stripped:
            raise ConfigurationError(
                f"required column {physical!r} (for {logical!r}) not found in header"
            )
        positions[logical] = stripped.index(physical)

    report = CleaningReport()
    records: list[TransactionRecord] = []
    seen: set[tuple] = set()
    for row in reader:
        if not row or not any(cell.strip() for cell in row):
            continue
        report.rows_read += 1
        if len(row) <= max(positions.values()):
            report.record_drop("short_row")
            continue
        cells = {name: row[idx].strip() for name, idx in positions.items()}
        if any(cells[name] == "" for name in REQUIRED_COLUMNS):
            report.record_drop("missing_value")
            continue
        try:
            fiscal = _parse_fiscal(cells["fiscal"])
        except ValueError as exc:
            report.record_drop("invalid_month" if "month" in str(exc) else "bad_fiscal")
            continue
        try:
            created_on = _parse_date(cells["created_on"])
            bill_date = _parse_date(cells["bill_date"])
        except ValueError:
            report.record_drop("bad_date")
            continue
        try:
            weight = _parse_number(cells["weight"])
            sales = _parse_number(cells["sales"])
            cost = _parse_number(cells["cost"])
        except ValueError:
            report.record_drop("bad_number")
            continue
        if weight < 0:
            report.record_drop("negative_weight")
            continue
        key = tuple(cells[name] for name in REQUIRED_COLUMNS)
        if key in seen:
            report.record_drop("duplicate")
            continue
        seen.add(key)
        records.append(
            TransactionRecord(
                customer_id=cells["customer"],
                fiscal_period=fiscal,
                created_on=created_on,
                bill_date=bill_date,
                product_group=cells["product_group"],
                distribution_channel=cells["distribution_channel"],
                weight_tons=weight,
                sales_value=sales,
                cost_value=cost,
            )
        )
        report.rows_kept += 1

    _profile_numeric_columns(records, report)
    report.validate()
    return records, report


def _profile_numeric_columns(records: list[TransactionRecord], report: CleaningReport) -> None:
    columns = {
        "weight_tons": [r.weight_tons for r in records],
        "sales_value": [r.sales_value for r in records],
        "cost_value": [r.cost_value for r in records],
    }
    for name, values in columns.items():
        try:
            skew, kurt = compute_moments(values)
        except DegenerateInputError:
            continue
        report.per_column_skewness[name] = skew
        report.per_column_kurtosis[name] = kurt


def compute_moments(values) -> tuple[float, float]:
    """Sample skewness (third standardized moment) and excess kurtosis.

    Uses population central moments (divide by n). Requires at least 3
    finite values with nonzero variance.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DegenerateInputError("need at least 3 values")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("values must be finite")
    centered = x - x.mean()
    m2 = float(np.mean(centered**2))
    if m2 <= 0.0:
        raise DegenerateInputError("zero variance")
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    return m3 / m2**1.5, m4 / m2**2 - 3.0


@dataclass(frozen=True)
class Transform:
    """A fitted monotone transform: kind, optional box-cox lambda, and the
    shift applied before the function (recorded so it can be reported)."""

    kind: str
    lam: float | None = None
    shift: float = 0.0

    @property
    def name(self) -> str:
        if self.kind == "box_cox":
            return f"box_cox(lam={self.lam:g})"
        return self.kind


def make_transform(values, kind: str, lam: float | None = None) -> Transform:
    """Fit a transform to data: computes the min-shift for negative inputs
    and checks domain constraints."""
    x = np.asarray(values, dtype=float)
    if kind == "identity":
        return Transform("identity")
    low = float(x.min()) if x.size else 0.0
    shift = -low if low < 0 else 0.0
    if kind in ("log1p", "sqrt"):
        return Transform(kind, shift=shift)
    if kind == "box_cox":
        if lam is None:
            raise ValueError("box_cox requires a lambda")
        if np.any(x + shift <= 0):
            raise TransformDomainError("box_cox needs strictly positive post-shift values")
        return Transform("box_cox", lam=float(lam), shift=shift)
    raise ValueError(f"unknown transform kind: {kind!r}")


def apply_transform(values, transform: Transform | str) -> np.ndarray:
    """Apply a transform. All kinds are strictly monotone, so the ranking
    of the input is preserved."""
    x = np.asarray(values, dtype=float)
    if isinstance(transform, str):
        transform = make_transform(x, transform)
    if transform.kind == "identity":
        return x.copy()
    shifted = x + transform.shift
    if transform.kind == "log1p":
        if np.any(shifted < 0):
            raise TransformDomainError("log1p needs non-negative post-shift values")
        return np.log1p(shifted)
    if transform.kind == "sqrt":
        if np.any(shifted < 0):
            raise TransformDomainError("sqrt needs non-negative post-shift values")
        return np.sqrt(shifted)
    if transform.kind == "box_cox":
        if np.any(shifted <= 0):
            raise TransformDomainError("box_cox needs strictly positive post-shift values")
        lam = transform.lam
        if lam == 0:
            return np.log(shifted)
        return (shifted**lam - 1.0) / lam
    raise ValueError(f"unknown transform kind: {transform.kind!r}")


def select_transform(values, skew_threshold: float = 1.0) -> Transform:
    """Pick the transform that best symmetrizes the data.

    Returns identity when |skewness| is already within the threshold.
    Otherwise evaluates log1p, sqrt, and box-cox over a lambda grid in
    [-2, 2] (step 0.25) and returns the candidate with the smallest
    absolute post-transform skewness. Candidates whose domain the data
    violates are skipped.
    """
    x = np.asarray(values, dtype=float)
    skew, _ = compute_moments(x)
    if abs(skew) <= skew_threshold:
        return Transform("identity")

    candidates: list[Transform] = [make_transform(x, "log1p"), make_transform(x, "sqrt")]
    for lam in BOX_COX_LAMBDA_GRID:
        try:
            candidates.append(make_transform(x, "box_cox", lam=lam))
        except TransformDomainError:
            continue

    best: Transform | None = None
    best_skew = math.inf
    for cand in candidates:
        try:
            post_skew, _ = compute_moments(apply_transform(x, cand))
        except (DegenerateInputError, TransformDomainError):
            continue
        if not math.isfinite(post_skew):
            continue
        if abs(post_skew) < best_skew:
            best, best_skew = cand, abs(post_skew)
    if best is None:
        return Transform("identity")
    return best


def refit_shift(transform: Transform, values) -> Transform:
    """Re-fit only the shift of an already-selected transform so it covers
    a wider value range (e.g. aggregates alongside per-period values)."""
    if transform.kind == "identity":
        return transform
    x = np.asarray(values, dtype=float)
    low = float(x.min()) if x.size else 0.0
    shift = -low if low < 0 else 0.0
    if transform.kind == "box_cox" and np.any(x + shift <= 0):
        raise TransformDomainError("box_cox needs strictly positive post-shift values")
    return replace(transform, shift=shift)
