"""Run configuration: one JSON file, overridable from the command line."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cluster import STRATEGIES
from .distance import METHODS, DistanceParams, fingerprint

CACHE_ENV = "DIELINK_CACHE"

# Fields that do not influence results and stay out of the fingerprint.
_EXECUTION_FIELDS = ("workers", "cache_dir", "out_dir")


@dataclass
class RunConfig:
    methods: list = field(default_factory=lambda: list(METHODS))
    params: DistanceParams = DistanceParams()
    strategies: list = field(default_factory=lambda: list(STRATEGIES))
    hist_bins: int = 30
    workers: int = 1
    cache_dir: str | None = None
    out_dir: str = "out"

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s): {bad}")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ValueError(f"unknown strategy(ies): {bad}")
        if self.cache_dir is None and os.environ.get(CACHE_ENV):
            self.cache_dir = os.environ[CACHE_ENV]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        return d

    def result_dict(self) -> dict:
        """The part of the config that determines outputs."""
        d = self.to_dict()
        for k in _EXECUTION_FIELDS:
            d.pop(k)
        return d

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.result_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        if "params" in d:
            d["params"] = DistanceParams.from_dict(d["params"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.result_dict(), indent=2, sort_keys=True) + "\n")
