"""Flat YAML configuration shared by the CLI and the service.

Keys mirror the field names of ``SimConfig`` and ``ClassifierConfig``, plus
the topology heuristics and ``strict``.  Rules are written as strings such as
``"invite_rate > 10"``.  Example::

    n_normal: 2000
    n_sybil: 200
    sybil_invite_rate: 20.0
    seed: 42
    rules:
      - invite_rate > 10.0
      - outgoing_accept_ratio < 0.5
    min_matches: 2
    window_seconds: 3600
    burst_threshold: 10
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..detector import ClassifierConfig, ConfigError
from ..simulator import SimConfig
from ..topology import (
    DEFAULT_BURST_THRESHOLD,
    DEFAULT_BURST_WINDOW_S,
    DEFAULT_LOOSE_CLUSTERING,
    DEFAULT_LOOSE_DENSITY,
)

ENV_VAR = "SYBILWATCH_CONFIG"

SIM_KEYS = tuple(f.name for f in dataclasses.fields(SimConfig))
CLASSIFIER_KEYS = ("rules", "min_matches", "evaluation_trigger", "window_seconds", "min_sent")


@dataclass(frozen=True)
class TopologyParams:
    burst_threshold: int = DEFAULT_BURST_THRESHOLD
    burst_window_seconds: int = DEFAULT_BURST_WINDOW_S
    loose_density: float = DEFAULT_LOOSE_DENSITY
    loose_clustering: float = DEFAULT_LOOSE_CLUSTERING


TOPOLOGY_KEYS = tuple(f.name for f in dataclasses.fields(TopologyParams))


@dataclass(frozen=True)
class Settings:
    sim: SimConfig = field(default_factory=SimConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    topology: TopologyParams = field(default_factory=TopologyParams)
    strict: bool = False

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self.sim)
        d.update(self.classifier.to_dict())
        d.update(dataclasses.asdict(self.topology))
        d["strict"] = self.strict
        return d


def settings_from_dict(d: dict) -> Settings:
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("config document must be a mapping")
    known = set(SIM_KEYS) | set(CLASSIFIER_KEYS) | set(TOPOLOGY_KEYS) | {"strict"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    sim = SimConfig(**{k: d[k] for k in SIM_KEYS if k in d})
    if "duration_hours" in d:
        sim = sim.replace(duration_hours=float(d["duration_hours"]))
    classifier = ClassifierConfig(**{k: d[k] for k in CLASSIFIER_KEYS if k in d})
    topology = TopologyParams(**{k: d[k] for k in TOPOLOGY_KEYS if k in d})
    return Settings(sim.validate(), classifier, topology, bool(d.get("strict", False)))


def load_settings(path: Optional[str] = None) -> Settings:
    """Load ``path``, else ``$SYBILWATCH_CONFIG``, else built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Settings()
    with open(path, "r", encoding="utf-8") as fh:
        return settings_from_dict(yaml.safe_load(fh))


def dump_settings(s: Settings) -> str:
    return yaml.safe_dump(s.to_dict(), sort_keys=False, default_flow_style=False)
