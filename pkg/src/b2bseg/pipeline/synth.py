"""Synthetic transaction logs with planted segment structure, used for
desk-scale acceptance runs and benchmarks.

Each planted segment follows a distinct temporal archetype (order cadence,
volumes, pricing, margin, product breadth, trend). Transaction counts are
deterministic, so doubling the customer count exactly doubles the log;
noise perturbs amounts and order days only. Per-customer random streams
are keyed by (seed, customer index), so a prefix of customers is identical
across differently sized logs.
"""

from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from ..ingest import TransactionRecord

__all__ = ["SyntheticDataset", "generate_synthetic"]

CSV_HEADER = (
    "customer,fiscal,created_on,bill_date,product_group,"
    "distribution_channel,weight,sales,cost"
)


@dataclass
class SyntheticDataset:
    records: list[TransactionRecord]
    truth: np.ndarray
    as_of: date
    k: int

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.customer_id},{r.fiscal_period},{r.created_on.isoformat()},"
                f"{r.bill_date.isoformat()},{r.product_group},{r.distribution_channel},"
                f"{r.weight_tons:.6f},{r.sales_value:.6f},{r.cost_value:.6f}"
            )
        return "\n".join(lines) + "\n"


def _archetypes_all() -> list[dict]:
    return [
        dict(orders=6, tons=2.0, price=120.0, margin=0.30, products=3, trend="flat", every=1),
        dict(orders=1, tons=20.0, price=400.0, margin=0.50, products=2, trend="grow", every=1),
        dict(orders=1, tons=5.0, price=60.0, margin=0.10, products=6, trend="flat", every=3),
        dict(orders=3, tons=15.0, price=80.0, margin=0.03, products=4, trend="decline", every=1),
        dict(orders=2, tons=8.0, price=150.0, margin=0.20, products=5, trend="seasonal", every=1),
        dict(orders=4, tons=1.0, price=300.0, margin=0.40, products=1, trend="grow", every=1),
        dict(orders=2, tons=30.0, price=50.0, margin=0.15, products=7, trend="seasonal", every=2),
        dict(orders=5, tons=6.0, price=90.0, margin=0.08, products=2, trend="decline", every=1),
    ]


def _archetypes_growth_stability() -> list[dict]:
    """RFM-matched archetypes: identical cadence, volume, and pricing, so
    recency / frequency / sales carry no signal; the segments differ only
    in product breadth and margin (growth and stability criteria)."""
    base = dict(orders=2, tons=10.0, price=100.0, trend="flat", every=1)
    mixes = [(1, 0.05), (3, 0.25), (5, 0.45), (7, 0.65), (2, 0.85), (4, 0.15), (6, 0.55), (8, 0.35)]
    return [dict(base, products=p, margin=m) for p, m in mixes]


def _trend_multiplier(trend: str, t: int) -> float:
    if trend == "grow":
        return 1.0 + 0.04 * t
    if trend == "decline":
        return max(0.3, 1.0 - 0.025 * t)
    if trend == "seasonal":
        return 1.0 + 0.4 * math.sin(2.0 * math.pi * t / 12.0)
    return 1.0


def _month_add(start: int, t: int) -> int:
    idx = (start // 100) * 12 + (start % 100 - 1) + t
    return (idx // 12) * 100 + idx % 12 + 1


def generate_synthetic(
    n_customers: int,
    n_periods: int = 24,
    k_planted: int = 4,
    noise: float = 0.2,
    seed: int = 7,
    signal: str = "all",
    start_period: int = 202001,
) -> SyntheticDataset:
    """Planted-structure transaction log plus ground-truth labels.

    ``signal="all"`` separates segments across every criterion family;
    ``signal="growth_stability"`` hides the signal from RFM features.
    Customer i belongs to segment i mod k.
    """
    if n_customers < 5 * k_planted:
        raise ValueError("need at least 5 customers per planted segment")
    if signal == "all":
        pool = _archetypes_all()
    elif signal == "growth_stability":
        pool = _archetypes_growth_stability()
    else:
        raise ValueError(f"unknown signal kind {signal!r}")
    if k_planted > len(pool):
        raise ValueError(f"at most {len(pool)} planted segments supported")

    records: list[TransactionRecord] = []
    truth = np.empty(n_customers, dtype=int)
    for i in range(n_customers):
        s = i % k_planted
        truth[i] = s
        arch = pool[s]
        rng = np.random.default_rng([seed, i])
        cust = f"C{i:05d}"
        channel = f"CH{s % 3}"
        for t in range(n_periods):
            period = _month_add(start_period, t)
            year, month = divmod(period, 100)
            last_day = calendar.monthrange(year, month)[1]
            active = t % arch["every"] == 0
            n_orders = arch["orders"] if active else 0
            mult = _trend_multiplier(arch["trend"], t)
            for o in range(n_orders):
                jitter = int(round(noise * 3.0 * rng.standard_normal()))
                day = min(max(2 + (o * 23) // max(1, n_orders) + jitter, 1), last_day)
                weight = arch["tons"] * mult * max(0.05, 1.0 + noise * 0.5 * rng.standard_normal())
                sales = weight * arch["price"] * max(0.05, 1.0 + noise * 0.3 * rng.standard_normal())
                margin = float(
                    np.clip(arch["margin"] * (1.0 + noise * 0.3 * rng.standard_normal()), -0.5, 0.95)
                )
                cost = sales * (1.0 - margin)
                bill = date(year, month, day)
                records.append(
                    TransactionRecord(
                        customer_id=cust,
                        fiscal_period=period,
                        created_on=bill,
                        bill_date=bill,
                        product_group=f"PG{s}_{(t * max(1, n_orders) + o) % arch['products']}",
                        distribution_channel=channel,
                        weight_tons=weight,
                        sales_value=sales,
                        cost_value=cost,
                    )
                )
    last = _month_add(start_period, n_periods - 1)
    y, m = divmod(last, 100)
    as_of = date(y, m, calendar.monthrange(y, m)[1])
    return SyntheticDataset(records=records, truth=truth, as_of=as_of, k=k_planted)
