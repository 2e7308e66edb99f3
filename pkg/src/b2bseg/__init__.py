"""Multi-criteria temporal B2B customer segmentation engine."""

__version__ = "0.1.0"

from . import cluster, consensus, features, ingest, mcdm, stability, tsdist  # noqa: F401
