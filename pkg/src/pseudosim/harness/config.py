"""Scenario configuration: one INI file of key-value sections.

Every default reproduces the reference evaluation setting, so an empty
(or absent) file runs the standard scenario.  The canonical dump of a
config is hashed into a digest that every output file embeds, tying
results to the exact configuration that produced them.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

from ..chain import ConsensusConfig
from ..crypto import CryptoTimingModel
from ..economics import EconomicParams
from ..privacy import TrackingBounds
from ..protocols import DelayAggregates, LatencyModel, WorldConfig
from ..madrl.mappo import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class TopologyConfig:
    districts: int = 3
    vmus_per_district: tuple[int, ...] = (80, 70, 60)
    subchains: int = 5
    miners_per_subchain: int = 4
    relay_miners: int = 4
    main_miners: int = 4
    single_chain_miners: int = 32


@dataclass
class PrivacyConfig:
    change_rate_per_min: float = 2.0
    min_vehicles: int = 10
    max_vehicles: int = 160

    def bounds(self) -> TrackingBounds:
        return TrackingBounds.from_vehicle_counts(self.min_vehicles, self.max_vehicles)


@dataclass
class ChainBenchConfig:
    base_round_ms: float = 10.0
    per_message_ms: float = 0.05
    block_capacity: int = 100
    per_tx_ms: float = 2.0     # benchmark calibration; library default is 0
    tx_counts: tuple[int, ...] = (500, 1000, 1500, 2000, 2500)
    subchain_grid: tuple[int, ...] = (3, 5, 7)
    miner_grid: tuple[int, ...] = (4, 7, 10, 13)
    workload_txs: int = 1000


@dataclass
class ScenarioRunConfig:
    slots: int = 100
    mobility_prob: float = 0.1
    batch_w: int = 10
    batch_u: int = 10
    broadcast_interval_ms: float = 300.0
    misbehavior_prob: float = 0.05
    false_report_prob: float = 0.02
    chain_mode: str = "cross"


@dataclass
class SweepConfig:
    lambda_grid: tuple[float, ...] = (1.25, 1.5, 1.75, 2.0)
    delta_grid: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    eval_episodes: int = 100
    train_episodes: int = 500


@dataclass
class ScenarioConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    economics: EconomicParams = field(default_factory=EconomicParams)
    training: TrainConfig = field(default_factory=TrainConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    crypto_timing: CryptoTimingModel = field(default_factory=CryptoTimingModel)
    aggregates: DelayAggregates = field(default_factory=DelayAggregates)
    chain_bench: ChainBenchConfig = field(default_factory=ChainBenchConfig)
    scenario: ScenarioRunConfig = field(default_factory=ScenarioRunConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    out_dir: str = "out"

    def world_config(self) -> WorldConfig:
        return WorldConfig(
            n_districts=self.topology.districts,
            vmus_per_district=tuple(self.topology.vmus_per_district),
            batch_w=self.scenario.batch_w,
            batch_u=self.scenario.batch_u,
            change_rate_per_min=self.privacy.change_rate_per_min,
            bounds=self.privacy.bounds(),
            latency=self.latency,
            crypto_timing=self.crypto_timing,
            aggregates=self.aggregates,
            chain_mode=self.scenario.chain_mode,
            miners_per_subchain=self.topology.miners_per_subchain,
            relay_miners=self.topology.relay_miners,
            main_miners=self.topology.main_miners,
            single_chain_miners=self.topology.single_chain_miners,
            broadcast_interval_ms=self.scenario.broadcast_interval_ms,
            mobility_prob=self.scenario.mobility_prob,
            misbehavior_prob=self.scenario.misbehavior_prob,
            false_report_prob=self.scenario.false_report_prob,
        )

    def bench_consensus(self) -> ConsensusConfig:
        cb = self.chain_bench
        return ConsensusConfig(
            per_message_ms=cb.per_message_ms,
            base_round_ms=cb.base_round_ms,
            block_capacity=cb.block_capacity,
            per_tx_ms=cb.per_tx_ms,
        )


_SECTIONS = {
    "topology": TopologyConfig,
    "privacy": PrivacyConfig,
    "economics": EconomicParams,
    "training": TrainConfig,
    "latency": LatencyModel,
    "crypto_timing": CryptoTimingModel,
    "delays": DelayAggregates,
    "chain_bench": ChainBenchConfig,
    "scenario": ScenarioRunConfig,
    "sweep": SweepConfig,
}

_SECTION_ATTR = {
    "topology": "topology",
    "privacy": "privacy",
    "economics": "economics",
    "training": "training",
    "latency": "latency",
    "crypto_timing": "crypto_timing",
    "delays": "aggregates",
    "chain_bench": "chain_bench",
    "scenario": "scenario",
    "sweep": "sweep",
}


def _parse_value(raw: str, annotation: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        element = float if any("." in p or "e" in p.lower() for p in parts) or isinstance(
            current[0] if current else 0.0, float
        ) else int
        return tuple(element(p) for p in parts)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def load_config(path: str | None = None) -> ScenarioConfig:
    """Build a config from an INI file; missing keys keep their defaults."""
    config = ScenarioConfig()
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section == "run":
            if parser.has_option("run", "seed"):
                config.seed = parser.getint("run", "seed")
            if parser.has_option("run", "out_dir"):
                config.out_dir = parser.get("run", "out_dir")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(config, _SECTION_ATTR[section])
        known = {f.name: f for f in fields(target)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            updates[key] = _parse_value(raw, known[key].type, getattr(target, key))
        if updates:
            merged = {f.name: getattr(target, f.name) for f in fields(target)}
            merged.update(updates)
            setattr(config, _SECTION_ATTR[section], type(target)(**merged))
    return config


def dump_config(config: ScenarioConfig) -> str:
    """Canonical INI dump: sections and keys in fixed order."""
    parser = configparser.ConfigParser()
    for section, attr in _SECTION_ATTR.items():
        target = getattr(config, attr)
        parser[section] = {}
        for f in fields(target):
            value = getattr(target, f.name)
            if isinstance(value, tuple):
                rendered = ", ".join(repr(v) for v in value)
            elif isinstance(value, str):
                rendered = value
            else:
                rendered = repr(value)
            parser[section][f.name] = rendered
    parser["run"] = {"seed": repr(config.seed), "out_dir": config.out_dir}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_digest(config: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(config).encode()).hexdigest()[:16]
