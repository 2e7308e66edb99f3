from __future__ import annotations

import warnings
from datetime import date

import numpy as np
import pytest

from b2bseg.features import FEATURE_NAMES, FeaturePanel
from b2bseg.ingest import TransactionRecord


@pytest.fixture(autouse=True)
def _quiet_constant_feature_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="constant features")
        yield


def make_record(
    customer="C1",
    fiscal=202301,
    bill="2023-01-15",
    created=None,
    product="PG0",
    channel="CH0",
    weight=1.0,
    sales=100.0,
    cost=60.0,
) -> TransactionRecord:
    bill_d = date.fromisoformat(bill)
    return TransactionRecord(
        customer_id=customer,
        fiscal_period=fiscal,
        created_on=date.fromisoformat(created) if created else bill_d,
        bill_date=bill_d,
        product_group=product,
        distribution_channel=channel,
        weight_tons=weight,
        sales_value=sales,
        cost_value=cost,
    )


def make_panel(values: np.ndarray, feature_names=None, scaled=False) -> FeaturePanel:
    """Hand-built panel for kernel and clustering tests; values is
    (customers, periods, features)."""
    n, T, F = values.shape
    names = tuple(feature_names) if feature_names else tuple(FEATURE_NAMES[:F])
    return FeaturePanel(
        customers=[f"C{i:03d}" for i in range(n)],
        periods=list(range(202001, 202001 + T)),
        feature_names=names,
        values=np.asarray(values, dtype=float),
        aggregates=np.asarray(values, dtype=float).sum(axis=1),
        as_of=date(2021, 12, 31),
    )
