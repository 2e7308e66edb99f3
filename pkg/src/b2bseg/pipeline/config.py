"""Run configuration: one document describing every stage of a run, with
chained per-stage fingerprints so edits invalidate exactly the stages at
and after the edit."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

STAGES = (
    "ingest",
    "features",
    "weights",
    "distances",
    "cluster",
    "stability",
    "consensus",
    "report",
)

# Config fields that feed each stage; a stage fingerprint chains its own
# fields with the upstream fingerprint, so changing a field invalidates
# that stage and everything after it.
STAGE_FIELDS = {
    "ingest": ("column_map", "delimiter"),
    "features": ("as_of", "interval", "transform_features", "skew_threshold", "scaling"),
    "weights": ("weights_mode", "ahp", "literal_weights", "allow_inconsistent"),
    "distances": ("measures", "k_tuning"),
    "cluster": ("methods", "k_range", "linkage", "seed"),
    "stability": ("window_policy", "window", "score_weights"),
    "consensus": ("w_t", "w_s", "resolution"),
    "report": (),
}


@dataclass
class RunConfig:
    column_map: dict = field(default_factory=dict)
    delimiter: str = ","
    as_of: str | None = None  # ISO date; None anchors on the last bill date
    interval: str = "month"
    transform_features: bool = True
    skew_threshold: float = 1.0
    scaling: str = "zscore"
    weights_mode: str = "hierarchical"  # hierarchical | flat | literal
    ahp: dict | None = None
    literal_weights: dict | None = None
    allow_inconsistent: bool = False
    measures: list = field(default_factory=lambda: ["dtw", "cid", "cort"])
    k_tuning: float = 2.0
    methods: list = field(default_factory=lambda: ["hierarchical", "spectral"])
    k_range: list = field(default_factory=lambda: [4, 5, 6])
    linkage: str = "average"
    seed: int = 42
    window_policy: str = "expanding"
    window: int = 12
    score_weights: dict = field(
        default_factory=lambda: {"alpha": 1 / 3, "beta": 1 / 3, "gamma": 1 / 3}
    )
    w_t: float = 0.6
    w_s: float = 0.4
    resolution: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def merged(self, overrides: dict) -> "RunConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return RunConfig.from_dict(merged)

    def validate(self) -> None:
        if not self.k_range:
            raise ValueError("k_range must not be empty")
        if self.weights_mode not in ("hierarchical", "flat", "literal"):
            raise ValueError(f"unknown weights_mode {self.weights_mode!r}")
        sw = self.score_weights
        if min(sw.get("alpha", 0), sw.get("beta", 0), sw.get("gamma", 0)) < 0:
            raise ValueError("score weights must be non-negative")
        if abs(self.w_t + self.w_s - 1.0) > 1e-9 or min(self.w_t, self.w_s) < 0:
            raise ValueError("consensus weights must be non-negative and sum to 1")

    def fingerprint(self) -> str:
        return _digest(self.to_dict())

    def stage_fingerprint(self, stage: str, upstream: str) -> str:
        subset = {name: getattr(self, name) for name in STAGE_FIELDS[stage]}
        return _digest({"stage": stage, "config": subset, "upstream": upstream})


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:24]
