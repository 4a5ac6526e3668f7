"""Scenario configuration: JSON schema, validation, and the built-in
desk-scale presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .relay import COMPACT, GRAPHENE, IBLT_MODEL, LEGACY, THRESHOLD_MODEL
from .txpool import FEE_RATE, FEE_SUM


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the field."""


@dataclass(slots=True)
class ChurnSpec:
    period_s: float
    up_fraction: float
    phase_s: float = 0.0


@dataclass(slots=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 1
    n_nodes: int = 20
    out_degree_range: tuple[int, int] = (8, 12)
    latency_ms_range: tuple[float, float] = (30.0, 70.0)
    tx_rate_per_s: float = 5.0
    block_interval_s: float = 600.0
    blocks_to_run: int = 750
    max_block_txs: int = 2000
    min_tx_age_ms: float = 1000.0
    tx_parent_prob: float = 0.2
    relay_mode: str = COMPACT
    graphene_model: str = IBLT_MODEL
    graphene_threshold: float = 0.15
    score_mode: str = FEE_RATE
    #: "all", "none", or an explicit node-id list
    sync_nodes: object = "none"
    sync_outbound_only: bool = False
    sync_filter_seen: bool = False
    trigger_limit: Optional[int] = None
    churn: dict[int, ChurnSpec] = field(default_factory=dict)
    #: node that starts with a stale mempool instead of the warm set
    joining_node: Optional[int] = None
    stale_mempool_size: int = 0
    warm_mempool_size: int = 0
    #: the summary pair: a stable reference node and the node under study
    stable_node: int = 2
    study_node: int = 1
    #: documents the compression from paper time to simulated time
    time_scale: float = 1.0

    # -- (de)serialization ------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["out_degree_range"] = list(self.out_degree_range)
        d["latency_ms_range"] = list(self.latency_ms_range)
        d["churn"] = {str(k): asdict(v) for k, v in self.churn.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "out_degree_range" in d:
            d["out_degree_range"] = tuple(d["out_degree_range"])
        if "latency_ms_range" in d:
            d["latency_ms_range"] = tuple(d["latency_ms_range"])
        if "churn" in d:
            try:
                d["churn"] = {int(k): ChurnSpec(**v)
                              for k, v in d["churn"].items()}
            except TypeError as e:
                raise ConfigError(f"churn: {e}") from e
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Path) -> "ScenarioConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def dump(self, path: Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        def positive(fieldname: str) -> None:
            if getattr(self, fieldname) <= 0:
                raise ConfigError(f"{fieldname} must be positive")

        for f_ in ("tx_rate_per_s", "block_interval_s", "time_scale",
                   "max_block_txs", "n_nodes"):
            positive(f_)
        if self.min_tx_age_ms < 0:
            raise ConfigError("min_tx_age_ms must be >= 0")
        if self.blocks_to_run < 36:
            raise ConfigError("blocks_to_run must be >= 36 (one full window)")
        lo, hi = self.out_degree_range
        if not 1 <= lo <= hi:
            raise ConfigError("out_degree_range must satisfy 1 <= lo <= hi")
        if self.n_nodes <= hi:
            raise ConfigError("n_nodes must exceed the max out-degree")
        if not 0 < self.latency_ms_range[0] <= self.latency_ms_range[1]:
            raise ConfigError("latency_ms_range must be positive and ordered")
        if self.relay_mode not in (LEGACY, COMPACT, GRAPHENE):
            raise ConfigError(f"relay_mode must be one of legacy/compact/"
                              f"graphene, got {self.relay_mode!r}")
        if self.graphene_model not in (THRESHOLD_MODEL, IBLT_MODEL):
            raise ConfigError("graphene_model must be threshold or iblt")
        if not 0 <= self.graphene_threshold <= 1:
            raise ConfigError("graphene_threshold must be in [0, 1]")
        if self.score_mode not in (FEE_RATE, FEE_SUM):
            raise ConfigError("score_mode must be fee_rate or fee_sum")
        if not 0 <= self.tx_parent_prob <= 1:
            raise ConfigError("tx_parent_prob must be in [0, 1]")
        if self.trigger_limit is not None and self.trigger_limit < 1:
            raise ConfigError("trigger_limit must be >= 1")
        if isinstance(self.sync_nodes, str):
            if self.sync_nodes not in ("all", "none"):
                raise ConfigError('sync_nodes must be "all", "none", or a '
                                  'node-id list')
        else:
            for n in self.sync_nodes:
                self._check_node(n, "sync_nodes")
        for n, spec in self.churn.items():
            self._check_node(n, "churn")
            if spec.period_s <= 0:
                raise ConfigError("churn period_s must be positive")
            if not 0 < spec.up_fraction <= 1:
                raise ConfigError("churn up_fraction must be in (0, 1]")
        for fieldname in ("stable_node", "study_node"):
            self._check_node(getattr(self, fieldname), fieldname)
        if self.joining_node is not None:
            self._check_node(self.joining_node, "joining_node")
        if self.stale_mempool_size < 0 or self.warm_mempool_size < 0:
            raise ConfigError("mempool preload sizes must be >= 0")

    def _check_node(self, n: object, fieldname: str) -> None:
        if not isinstance(n, int) or not 0 <= n < self.n_nodes:
            raise ConfigError(f"{fieldname}: {n!r} is not a valid node id")

    def sync_enabled_for(self, node_id: int) -> bool:
        if self.sync_nodes == "all":
            return True
        if self.sync_nodes == "none":
            return False
        return node_id in self.sync_nodes


# ---------------------------------------------------------------------------
# presets
#
# Desk-scale analogues of the reference experiments: all ratios (90% uptime,
# ~30 txs per block interval, 36-block window) are preserved under a uniform
# 20x time compression (600 s block interval -> 30 s; 10 min churn period ->
# 30 s), recorded in time_scale.

_DESK = dict(
    n_nodes=20,
    out_degree_range=(4, 6),
    tx_rate_per_s=1.0,
    block_interval_s=30.0,
    blocks_to_run=750,
    time_scale=20.0,
    stable_node=2,
    study_node=1,
)

_CHURN_10PCT = {"1": {"period_s": 30.0, "up_fraction": 0.9, "phase_s": 0.0}}

PRESETS: dict[str, dict] = {
    "fresh-join": dict(
        name="fresh-join",
        n_nodes=12,
        out_degree_range=[4, 6],
        tx_rate_per_s=1.0,
        block_interval_s=30.0,
        blocks_to_run=200,
        max_block_txs=60,
        time_scale=20.0,
        relay_mode=COMPACT,
        joining_node=1,
        stale_mempool_size=300,
        warm_mempool_size=1500,
        stable_node=2,
        study_node=1,
    ),
    "churn-nosync": dict(
        name="churn-nosync",
        relay_mode=COMPACT,
        churn=_CHURN_10PCT,
        sync_nodes="none",
        **{k: (list(v) if isinstance(v, tuple) else v)
           for k, v in _DESK.items()},
    ),
    "churn-sync": dict(
        name="churn-sync",
        relay_mode=COMPACT,
        churn=_CHURN_10PCT,
        sync_nodes="all",
        **{k: (list(v) if isinstance(v, tuple) else v)
           for k, v in _DESK.items()},
    ),
    "graphene-sim": dict(
        name="graphene-sim",
        relay_mode=GRAPHENE,
        graphene_model=THRESHOLD_MODEL,
        churn=_CHURN_10PCT,
        sync_nodes="none",
        **{k: (list(v) if isinstance(v, tuple) else v)
           for k, v in _DESK.items()},
    ),
}


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; "
                          f"available: {', '.join(sorted(PRESETS))}")
    return ScenarioConfig.from_dict(PRESETS[name])
