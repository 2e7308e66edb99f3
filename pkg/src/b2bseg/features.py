"""Per-customer, per-period feature panel: RFM, growth, and stability
criteria derived from transaction records, plus scaling and exploratory
correlation."""

from __future__ import annotations

import calendar
import warnings
from dataclasses import dataclass, field, replace
from datetime import date, timedelta

import numpy as np

from .ingest import TransactionRecord

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_DIMENSIONS",
    "FeatureVector",
    "ScalingParams",
    "FeaturePanel",
    "CorrelationMatrix",
    "EmptyPanelError",
    "PanelConfigError",
    "build_panel",
    "scale_panel",
    "spearman",
]

FEATURE_NAMES = (
    "recency",
    "frequency",
    "ltm_frequency",
    "volume",
    "avg_volume",
    "product_mix",
    "loyalty",
    "sales",
    "avg_profit",
    "profit_margin",
)

# Criterion grouping used by the preference hierarchy.
FEATURE_DIMENSIONS = {
    "recency": "RFM",
    "frequency": "RFM",
    "sales": "RFM",
    "product_mix": "Growth",
    "volume": "Growth",
    "avg_profit": "Growth",
    "ltm_frequency": "Growth",
    "loyalty": "Stability",
    "avg_volume": "Stability",
    "profit_margin": "Stability",
}

# Features whose aggregate equals the sum of the per-period slices.
ADDITIVE_FEATURES = ("frequency", "volume", "sales")

LTM_DAYS = 365
DAYS_PER_YEAR = 365.25
MARGIN_SCALE = 100.0  # per-transaction margin reported as a percentage


class EmptyPanelError(ValueError):
    pass


class PanelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    recency: float
    frequency: float
    ltm_frequency: float
    volume: float
    avg_volume: float
    product_mix: float
    loyalty: float
    sales: float
    avg_profit: float
    profit_margin: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)


@dataclass(frozen=True)
class ScalingParams:
    """Affine per-feature scaling: scaled = (raw - center) / scale."""

    method: str
    center: np.ndarray
    scale: np.ndarray

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.center) / self.scale

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return scaled * self.scale + self.center


@dataclass
class FeaturePanel:
    """Dense customers x periods x features tensor plus per-customer
    aggregates over the full horizon.

    Periods are contiguous YYYYMM integers (or years, for yearly panels).
    After construction the tensor is NaN-free: count/sum features are
    zero-filled for inactive periods and recency is carried forward.
    """

    customers: list[str]
    periods: list[int]
    feature_names: tuple[str, ...]
    values: np.ndarray  # (n_customers, n_periods, n_features)
    aggregates: np.ndarray  # (n_customers, n_features)
    as_of: date
    interval: str = "month"
    scaling: ScalingParams | None = None
    aggregate_scaling: ScalingParams | None = None
    transforms: dict[str, str] = field(default_factory=dict)

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def feature_index(self, name: str) -> int:
        return self.feature_names.index(name)

    def series(self, customer: int | str, feature: str) -> np.ndarray:
        if isinstance(customer, str):
            customer = self.customers.index(customer)
        return self.values[customer, :, self.feature_index(feature)]

    def aggregate_vector(self, customer: int | str) -> FeatureVector:
        if isinstance(customer, str):
            customer = self.customers.index(customer)
        row = self.aggregates[customer]
        return FeatureVector(**{name: float(row[i]) for i, name in enumerate(self.feature_names)})

    def slice_periods(self, start: int, stop: int) -> "FeaturePanel":
        """View of a contiguous period window (used by per-period re-clustering)."""
        return replace(
            self,
            periods=self.periods[start:stop],
            values=self.values[:, start:stop, :],
        )

    def to_csv(self) -> str:
        """Columnar audit export: customer_id, period, then one column per feature."""
        lines = ["customer_id,period," + ",".join(self.feature_names)]
        for i, cust in enumerate(self.customers):
            for t, period in enumerate(self.periods):
                row = ",".join(repr(float(v)) for v in self.values[i, t])
                lines.append(f"{cust},{period},{row}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CorrelationMatrix:
    feature_names: tuple[str, ...]
    rho: np.ndarray
    constant_features: tuple[str, ...] = ()

    def to_text(self) -> str:
        lines = ["\t".join(("feature",) + self.feature_names)]
        for i, name in enumerate(self.feature_names):
            lines.append(name + "\t" + "\t".join(f"{v:.6f}" for v in self.rho[i]))
        return "\n".join(lines) + "\n"


def _month_index(period: int) -> int:
    return (period // 100) * 12 + (period % 100 - 1)


def _index_month(idx: int) -> int:
    return (idx // 12) * 100 + idx % 12 + 1


def _period_end(period: int, interval: str) -> date:
    if interval == "year":
        return date(period, 12, 31)
    year, month = divmod(period, 100)
    return date(year, month, calendar.monthrange(year, month)[1])


def _period_start(period: int, interval: str) -> date:
    if interval == "year":
        return date(period, 1, 1)
    return date(period // 100, period % 100, 1)


def _period_key(fiscal_period: int, interval: str) -> int:
    return fiscal_period // 100 if interval == "year" else fiscal_period


def _period_range(lo: int, hi: int, interval: str) -> list[int]:
    if interval == "year":
        return list(range(lo, hi + 1))
    return [_index_month(i) for i in range(_month_index(lo), _month_index(hi) + 1)]


def build_panel(
    records: list[TransactionRecord],
    as_of: date,
    interval: str = "month",
) -> FeaturePanel:
    """Build the 10-feature panel over a contiguous period horizon.

    Per-period slices are as-of the period end: counts and sums cover the
    period itself, while recency, loyalty, product mix, and the running
    averages look at everything up to that period. Aggregates cover the
    whole horizon anchored at ``as_of``.
    """
    if interval not in ("month", "year"):
        raise PanelConfigError(f"unknown interval {interval!r}")
    if not records:
        raise EmptyPanelError("no records to build a panel from")
    max_bill = max(r.bill_date for r in records)
    if as_of < max_bill:
        raise PanelConfigError(f"as_of {as_of} precedes the last bill date {max_bill}")

    period_keys = [_period_key(r.fiscal_period, interval) for r in records]
    periods = _period_range(min(period_keys), max(period_keys), interval)
    period_pos = {p: t for t, p in enumerate(periods)}
    customers = sorted({r.customer_id for r in records})
    cust_pos = {c: i for i, c in enumerate(customers)}

    by_customer: list[list[tuple[int, TransactionRecord]]] = [[] for _ in customers]
    for rec, key in zip(records, period_keys):
        by_customer[cust_pos[rec.customer_id]].append((period_pos[key], rec))

    n, T, F = len(customers), len(periods), len(FEATURE_NAMES)
    values = np.zeros((n, T, F), dtype=float)
    aggregates = np.zeros((n, F), dtype=float)
    horizon_start = _period_start(periods[0], interval)
    period_ends = [_period_end(p, interval) for p in periods]
    fidx = {name: i for i, name in enumerate(FEATURE_NAMES)}

    for i, txns in enumerate(by_customer):
        txns.sort(key=lambda item: (item[1].bill_date, item[0]))
        bill_dates = [rec.bill_date for _, rec in txns]
        values[i] = _customer_period_features(
            txns, T, horizon_start, period_ends, fidx
        )
        aggregates[i] = _customer_aggregate(
            txns, bill_dates, as_of, fidx
        )

    panel = FeaturePanel(
        customers=customers,
        periods=periods,
        feature_names=FEATURE_NAMES,
        values=values,
        aggregates=aggregates,
        as_of=as_of,
        interval=interval,
    )
    assert not np.isnan(panel.values).any()
    return panel


def _customer_period_features(txns, T, horizon_start, period_ends, fidx) -> np.ndarray:
    out = np.zeros((T, len(FEATURE_NAMES)), dtype=float)
    per_period: list[list[TransactionRecord]] = [[] for _ in range(T)]
    for t, rec in txns:
        per_period[t].append(rec)

    cum_count = 0
    cum_volume = 0.0
    cum_sales = 0.0
    cum_profit = 0.0
    cum_active = 0
    cum_margin_sum = 0.0
    cum_margin_n = 0
    products: set[str] = set()
    first_bill: date | None = None
    last_bill: date | None = None
    bill_history: list[date] = []

    for t in range(T):
        rows = per_period[t]
        end = period_ends[t]
        if rows:
            cum_active += 1
        for rec in rows:
            cum_count += 1
            cum_volume += rec.weight_tons
            cum_sales += rec.sales_value
            cum_profit += rec.profit
            products.add(rec.product_group)
            if rec.sales_value != 0.0:
                cum_margin_sum += MARGIN_SCALE * rec.profit / rec.sales_value
                cum_margin_n += 1
            bill_history.append(rec.bill_date)
            if first_bill is None or rec.bill_date < first_bill:
                first_bill = rec.bill_date
            if last_bill is None or rec.bill_date > last_bill:
                last_bill = rec.bill_date

        anchor = last_bill if last_bill is not None and last_bill <= end else None
        if anchor is None and last_bill is not None:
            # fiscal period and bill date disagree; fall back to billed-so-far
            past = [b for b in bill_history if b <= end]
            anchor = max(past) if past else None
        out[t, fidx["recency"]] = (end - (anchor or horizon_start)).days
        out[t, fidx["frequency"]] = len(rows)
        ltm_lo = end - timedelta(days=LTM_DAYS)
        out[t, fidx["ltm_frequency"]] = sum(1 for b in bill_history if ltm_lo < b <= end)
        out[t, fidx["volume"]] = sum(r.weight_tons for r in rows)
        out[t, fidx["avg_volume"]] = cum_volume / cum_active if cum_active else 0.0
        out[t, fidx["product_mix"]] = len(products)
        if first_bill is not None and first_bill <= end:
            out[t, fidx["loyalty"]] = max(0.0, (end - first_bill).days / DAYS_PER_YEAR)
        out[t, fidx["sales"]] = sum(r.sales_value for r in rows)
        out[t, fidx["avg_profit"]] = cum_profit / cum_active if cum_active else 0.0
        out[t, fidx["profit_margin"]] = cum_margin_sum / cum_margin_n if cum_margin_n else 0.0
    return out


def _customer_aggregate(txns, bill_dates, as_of, fidx) -> np.ndarray:
    out = np.zeros(len(FEATURE_NAMES), dtype=float)
    recs = [rec for _, rec in txns]
    active_periods = len({t for t, _ in txns})
    first_bill = min(bill_dates)
    last_bill = max(bill_dates)
    total_volume = sum(r.weight_tons for r in recs)
    total_profit = sum(r.profit for r in recs)
    margins = [MARGIN_SCALE * r.profit / r.sales_value for r in recs if r.sales_value != 0.0]
    ltm_lo = as_of - timedelta(days=LTM_DAYS)

    out[fidx["recency"]] = (as_of - last_bill).days
    out[fidx["frequency"]] = len(recs)
    out[fidx["ltm_frequency"]] = sum(1 for b in bill_dates if ltm_lo < b <= as_of)
    out[fidx["volume"]] = total_volume
    out[fidx["avg_volume"]] = total_volume / active_periods
    out[fidx["product_mix"]] = len({r.product_group for r in recs})
    out[fidx["loyalty"]] = max(0.0, (as_of - first_bill).days / DAYS_PER_YEAR)
    out[fidx["sales"]] = sum(r.sales_value for r in recs)
    out[fidx["avg_profit"]] = total_profit / active_periods
    out[fidx["profit_margin"]] = float(np.mean(margins)) if margins else 0.0
    return out


def _fit_scaling(matrix: np.ndarray, method: str) -> ScalingParams:
    """matrix is (rows, features); constant features map to 0 via unit scale."""
    if method == "zscore":
        center = matrix.mean(axis=0)
        scale = matrix.std(axis=0)
    elif method == "minmax":
        center = matrix.min(axis=0)
        scale = matrix.max(axis=0) - center
    else:
        raise PanelConfigError(f"unknown scaling method {method!r}")
    constant = scale == 0.0
    if constant.any():
        warnings.warn(
            f"constant features scaled to 0: indices {np.flatnonzero(constant).tolist()}",
            stacklevel=2,
        )
        scale = np.where(constant, 1.0, scale)
    return ScalingParams(method=method, center=center, scale=scale)


def scale_panel(panel: FeaturePanel, method: str = "zscore") -> FeaturePanel:
    """Scale each feature over the customer x period plane (and aggregates
    over customers, with their own parameters). zscore gives mean 0 and
    sd 1 per feature; minmax maps to [0, 1]."""
    plane = panel.values.reshape(-1, panel.values.shape[2])
    scaling = _fit_scaling(plane, method)
    agg_scaling = _fit_scaling(panel.aggregates, method)
    return replace(
        panel,
        values=scaling.transform(panel.values),
        aggregates=agg_scaling.transform(panel.aggregates),
        scaling=scaling,
        aggregate_scaling=agg_scaling,
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(aggregates: np.ndarray, feature_names=FEATURE_NAMES) -> CorrelationMatrix:
    """Spearman rank correlation over per-customer aggregate features,
    with average-rank tie handling. Constant features get coefficient 0
    and are flagged."""
    X = np.asarray(aggregates, dtype=float)
    if X.shape[0] < 3:
        raise ValueError("need at least 3 customers for correlation")
    m = X.shape[1]
    ranks = np.column_stack([_average_ranks(X[:, j]) for j in range(m)])
    constant = np.array([np.ptp(X[:, j]) == 0.0 for j in range(m)])
    rho = np.ones((m, m), dtype=float)
    for i in range(m):
        for j in range(i + 1, m):
            if constant[i] or constant[j]:
                r = 0.0
            else:
                ri = ranks[:, i] - ranks[:, i].mean()
                rj = ranks[:, j] - ranks[:, j].mean()
                r = float(ri @ rj / np.sqrt((ri @ ri) * (rj @ rj)))
            rho[i, j] = rho[j, i] = r
    return CorrelationMatrix(
        feature_names=tuple(feature_names),
        rho=rho,
        constant_features=tuple(np.asarray(feature_names)[constant].tolist()),
    )
