"""Experiment drivers: chain benchmarks, lifecycle simulation, training
and evaluation, and parameter sweeps, all seeded and exportable.

Outputs are deterministic for a given config and seed; wall-clock
timings are returned and printed but never written into the data files,
so repeated runs stay byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..chain import ChainState, ChainSystem, ConsensusConfig, Tier, commit_workload
from ..economics import (
    EconomicParams,
    PoissonDemand,
    brute_force_optimum,
    critical_ratio,
    optimal_generation,
    validate_constraints,
)
from ..madrl.baselines import GeneticConfig, baseline_policy, evaluate_policy
from ..madrl.env import PseudonymGenEnv
from ..madrl.mappo import TrainConfig, evaluate_mappo, train_mappo
from ..privacy import simulate_dope, time_average_dope
from ..scenario import audit_scenario, export_audit_jsonl, export_event_csv, run_scenario
from .config import ScenarioConfig, config_digest


@dataclass
class MetricsRecord:
    """Named series of (x, y, stderr) points plus run metadata."""

    experiment_id: str
    series: dict[str, list[tuple]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, name: str, x, y, stderr: float = 0.0) -> None:
        self.series.setdefault(name, []).append((x, y, stderr))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_digest={self.metadata.get('config_digest', '')}\n")
        buf.write(f"# experiment={self.experiment_id} seed={self.metadata.get('seed', '')}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["series", "x", "y", "stderr"])
        for name in sorted(self.series):
            for x, y, stderr in self.series[name]:
                writer.writerow([name, repr(x), repr(y), repr(stderr)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "experiment_id": self.experiment_id,
                "metadata": self.metadata,
                "series": {k: [list(p) for p in v] for k, v in self.series.items()},
            },
            sort_keys=True,
            indent=2,
        )


def write_record(record: MetricsRecord, out_dir: str | Path, fmt: str = "csv") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{record.experiment_id}.{fmt}"
    path.write_text(record.to_csv() if fmt == "csv" else record.to_json())
    return path


def _single_chain(miners: int, consensus: ConsensusConfig) -> ChainState:
    return ChainState(
        chain_id="single",
        tier=Tier.MAIN,
        consensus=replace(consensus, n_miners=miners),
        miners=tuple(f"m{i}" for i in range(miners)),
    )


def _cross_total(config: ScenarioConfig, s: int, miners: int, n_txs: int) -> float:
    system = ChainSystem.build(
        s,
        miners_per_subchain=miners,
        relay_miners=config.topology.relay_miners,
        consensus=config.bench_consensus(),
    )
    return commit_workload(system.subchains, n_txs, relay=system.relay).total_ms


def run_chain_benchmark(config: ScenarioConfig) -> list[MetricsRecord]:
    """Consensus-time curves and the request-delay breakdown table."""
    digest = config_digest(config)
    bench = config.chain_bench
    consensus = config.bench_consensus()
    meta = {"config_digest": digest, "seed": config.seed}

    subchain_rec = MetricsRecord("chain_bench_subchains", metadata=dict(meta))
    n_txs = bench.workload_txs
    single_ms = commit_workload(
        [_single_chain(config.topology.single_chain_miners, consensus)], n_txs
    ).total_ms
    subchain_rec.add("single_chain", 1, single_ms)
    for miners in bench.miner_grid:
        for s in bench.subchain_grid:
            subchain_rec.add(f"cross_miners_{miners}", s, _cross_total(config, s, miners, n_txs))
    best_s = max(bench.subchain_grid)
    cross_best = _cross_total(config, best_s, config.topology.miners_per_subchain, n_txs)
    subchain_rec.metadata["speedup_at_max_subchains"] = single_ms / cross_best

    tx_rec = MetricsRecord("chain_bench_transactions", metadata=dict(meta))
    s_default = config.topology.subchains
    for count in bench.tx_counts:
        single = commit_workload(
            [_single_chain(config.topology.single_chain_miners, consensus)], count
        ).total_ms
        cross = _cross_total(config, s_default, config.topology.miners_per_subchain, count)
        tx_rec.add("single_chain", count, single)
        tx_rec.add(f"cross_chain_s{s_default}", count, cross)
    last = bench.tx_counts[-1]
    single_last = [p for p in tx_rec.series["single_chain"] if p[0] == last][0][1]
    cross_last = [p for p in tx_rec.series[f"cross_chain_s{s_default}"] if p[0] == last][0][1]
    tx_rec.metadata["reduction_at_max_txs"] = 1.0 - cross_last / single_last

    delay_rec = MetricsRecord("request_delay_table", metadata=dict(meta))
    agg = config.aggregates
    lat = config.latency
    rows = {
        "single_chain": (agg.crypto_single_ms, lat.round_trip_via_ta(), agg.chain_single_ms),
        "cross_chain_local": (agg.crypto_cross_ms, lat.round_trip_via_lmm(), agg.chain_cross_local_ms),
        "cross_chain_cross_district": (
            agg.crypto_cross_ms, lat.round_trip_via_lmm(), agg.chain_cross_district_ms,
        ),
    }
    for name, (crypto, comm, chain) in rows.items():
        delay_rec.add(name, "crypto_ms", crypto)
        delay_rec.add(name, "communication_ms", comm)
        delay_rec.add(name, "chain_verification_ms", chain)
        delay_rec.add(name, "total_ms", crypto + comm + chain)
    return [subchain_rec, tx_rec, delay_rec]


def run_protocol_simulation(config: ScenarioConfig, duration_slots: int | None = None):
    """Full lifecycle scenario plus its property audit.

    Returns (scenario result, audit report, metrics record).
    """
    slots = duration_slots if duration_slots is not None else config.scenario.slots
    if slots < 10:
        raise ValueError("duration must cover at least 10 slots")
    result = run_scenario(config.world_config(), slots, seed=config.seed)
    report = audit_scenario(result)
    record = MetricsRecord(
        "protocol_simulation",
        metadata={
            "config_digest": config_digest(config),
            "seed": config.seed,
            "slots": slots,
            "audit_passed": report.passed,
            **{f"audit_{k}": v for k, v in report.checks.items()},
        },
    )
    for protocol, stats in result.delay_summary().items():
        for stat_name, value in stats.items():
            record.add(protocol, stat_name, value)
    record.add("counters", "changes", result.changes_total)
    record.add("counters", "broadcasts", result.broadcasts_total)
    record.add("counters", "misbehaviors_injected", result.injected_misbehaviors)
    record.add("counters", "blacklist_size", len(result.world.blacklist.entries))
    return result, report, record


def _make_env(config: ScenarioConfig, seed: int, lam: float | None = None) -> PseudonymGenEnv:
    lam = lam if lam is not None else config.privacy.change_rate_per_min
    h_bar = time_average_dope(lam, config.privacy.bounds())
    return PseudonymGenEnv(
        config.economics,
        h_bar,
        history_len=config.training.history,
        episode_len=config.training.steps,
        seed=seed,
    )


BASELINE_KINDS = ("random", "greedy", "genetic", "oracle")


def run_training_eval(config: ScenarioConfig):
    """Train the policy-gradient agents and every baseline under the same
    seeds; returns (records, wall_clock_seconds, train_result)."""
    digest = config_digest(config)
    seed = config.seed
    h_bar = time_average_dope(config.privacy.change_rate_per_min, config.privacy.bounds())
    cfg = replace(config.training, seed=seed)
    wall_clock: dict[str, float] = {}

    t0 = time.perf_counter()
    train_result = train_mappo(cfg, _make_env(config, seed))
    wall_clock["mappo"] = time.perf_counter() - t0

    curves = {"mappo": train_result.episode_rewards}
    for kind in BASELINE_KINDS:
        t0 = time.perf_counter()
        policy = baseline_policy(
            kind, _make_env(config, seed), config.economics, h_bar, seed=seed
        )
        curves[kind] = _baseline_curve(policy, kind, config, seed, cfg.episodes)
        wall_clock[kind] = time.perf_counter() - t0

    curve_rec = MetricsRecord(
        "training_curves", metadata={"config_digest": digest, "seed": seed}
    )
    for method, curve in curves.items():
        for episode, value in enumerate(curve):
            curve_rec.add(method, episode, float(value))
    for j in range(train_result.episode_mean_actions.shape[1]):
        for episode, value in enumerate(train_result.episode_mean_actions[:, j]):
            curve_rec.add(f"mappo_agent{j}_mean_generation", episode, float(value))

    final_rec = MetricsRecord(
        "training_final", metadata={"config_digest": digest, "seed": seed}
    )
    window = min(50, cfg.episodes)
    for method, curve in curves.items():
        tail = np.asarray(curve[-window:])
        final_rec.add(method, "final_mean", float(tail.mean()),
                      float(tail.std(ddof=1) / np.sqrt(len(tail))) if len(tail) > 1 else 0.0)
    return [curve_rec, final_rec], wall_clock, train_result


def _baseline_curve(policy, kind: str, config: ScenarioConfig, seed: int, episodes: int) -> np.ndarray:
    if kind == "genetic":
        # fitting already consumed episode evaluations; report the
        # best-so-far trajectory stretched over the episode axis
        history = np.asarray(policy.history)
        idx = np.minimum(
            (np.arange(episodes) * len(history)) // episodes, len(history) - 1
        )
        return history[idx]
    return evaluate_policy(_make_env(config, seed), policy, episodes)


def sweep_and_export(config: ScenarioConfig, sweep: str = "lambda", methods=None):
    """Evaluate trained agents and baselines across a parameter grid.

    For each grid point the agents are retrained (the privacy level or
    cost structure changes the game), then all policies are scored over
    the configured number of evaluation episodes.  ``methods`` restricts
    which policies run (default: the trained agents plus every baseline);
    leaving the trained agents out skips training entirely.
    """
    if sweep not in ("lambda", "delta"):
        raise ValueError("sweep must be 'lambda' or 'delta'")
    if methods is None:
        methods = ("mappo",) + BASELINE_KINDS
    digest = config_digest(config)
    grid = config.sweep.lambda_grid if sweep == "lambda" else config.sweep.delta_grid
    record = MetricsRecord(
        f"sweep_{sweep}", metadata={"config_digest": digest, "seed": config.seed}
    )
    warnings = []
    for value in grid:
        if sweep == "lambda":
            point_cfg = config
            lam = value
            params = config.economics
        else:
            lam = config.privacy.change_rate_per_min
            params = config.economics.with_overrides(delta=float(value))
            point_cfg = replace(config, economics=params)
        h_bar = time_average_dope(lam, config.privacy.bounds())
        violations = validate_constraints(params, h_bar, [0] * params.n_metaverses)
        margin_warn = any(v.constraint == "privacy_margin" for v in violations)
        if margin_warn:
            warnings.append((sweep, value))
        record.add("privacy_margin_warning", value, 1.0 if margin_warn else 0.0)
        for j, mean in enumerate(params.demand_means):
            record.add(f"g_star_district{j}", value,
                       optimal_generation(params, h_bar, PoissonDemand(mean)))

        seed = config.seed
        episodes = config.sweep.eval_episodes

        def point_env(env_seed):
            return PseudonymGenEnv(
                params, h_bar, history_len=config.training.history,
                episode_len=config.training.steps, seed=env_seed,
            )

        if "mappo" in methods:
            train_cfg = replace(
                config.training, seed=seed, episodes=config.sweep.train_episodes
            )
            result = train_mappo(train_cfg, point_env(seed))
            mappo_curve = evaluate_mappo(result.policies, point_env(seed + 1), episodes, seed=seed)
            record.add("mappo", value, float(mappo_curve.mean()),
                       float(mappo_curve.std(ddof=1) / np.sqrt(episodes)))
        for kind in BASELINE_KINDS:
            if kind not in methods:
                continue
            policy = baseline_policy(
                kind, point_env(seed), params, h_bar, seed=seed,
                genetic_cfg=GeneticConfig(seed=seed),
            )
            curve = evaluate_policy(point_env(seed + 1), policy, episodes)
            record.add(kind, value, float(curve.mean()),
                       float(curve.std(ddof=1) / np.sqrt(episodes)))
    record.metadata["warnings"] = [f"{name}={value}" for name, value in warnings]
    return record


def dope_report(config: ScenarioConfig) -> MetricsRecord:
    """Closed-form versus Monte Carlo privacy metric at the configured rate."""
    bounds = config.privacy.bounds()
    record = MetricsRecord(
        "dope", metadata={"config_digest": config_digest(config), "seed": config.seed}
    )
    for lam in (0.5, 1.0, config.privacy.change_rate_per_min):
        closed = time_average_dope(lam, bounds)
        estimate = simulate_dope(lam, bounds, horizon=2e5 / lam * lam, seed=config.seed)
        record.add("closed_form", lam, closed)
        record.add("monte_carlo", lam, estimate.value)
        record.add("relative_error", lam, abs(estimate.value - closed) / abs(closed))
    return record


def newsvendor_report(config: ScenarioConfig) -> MetricsRecord:
    """Analytic stocking optimum vs brute force, per district."""
    params = config.economics
    bounds = config.privacy.bounds()
    h_bar = time_average_dope(config.privacy.change_rate_per_min, bounds)
    record = MetricsRecord(
        "newsvendor", metadata={"config_digest": config_digest(config), "seed": config.seed}
    )
    record.metadata["critical_ratio"] = critical_ratio(params, h_bar)
    for j, mean in enumerate(params.demand_means):
        model = PoissonDemand(mean)
        analytic = optimal_generation(params, h_bar, model)
        brute = brute_force_optimum(
            params, h_bar, model, range(0, params.g_max + 1), 100_000, seed=config.seed,
            vmu_count=params.vmu_counts[j],
        )
        record.add("analytic_g_star", j, analytic)
        record.add("brute_force_g_star", j, brute)
        record.add("demand_mean", j, mean)
    return record
