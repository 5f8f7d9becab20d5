"""Command-line entry point for the experiment drivers.

Exit codes: 0 success, 2 configuration or validation failure, 3
property-audit failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..madrl.mappo import save_policies
from .config import ConfigError, ScenarioConfig, config_digest, dump_config, load_config
from .experiments import (
    dope_report,
    newsvendor_report,
    run_chain_benchmark,
    run_protocol_simulation,
    run_training_eval,
    sweep_and_export,
    write_record,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_AUDIT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudosim",
        description="Cross-chain pseudonym management simulator and experiments",
    )
    parser.add_argument("--config", metavar="PATH", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", metavar="DIR", default=None, help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("chain-bench", help="consensus timing and delay-table benchmarks")
    sim = sub.add_parser("protocol-sim", help="lifecycle scenario with property audit")
    sim.add_argument("--slots", type=int, default=None, help="override scenario length")
    sub.add_parser("train", help="train agents and baselines, export curves")
    ev = sub.add_parser("eval", help="evaluate saved policies against baselines")
    ev.add_argument("--policies", metavar="PATH", default=None, help="policy parameter file")
    ev.add_argument("--episodes", type=int, default=100)
    sw = sub.add_parser("sweep", help="parameter sweep of social welfare")
    sw.add_argument("--sweep", choices=("lambda", "delta"), default="lambda")
    sub.add_parser("dope", help="privacy metric: closed form vs Monte Carlo")
    sub.add_parser("newsvendor", help="analytic optimum vs brute force")
    return parser


def _load(args) -> ScenarioConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    return config


def _emit(records, config: ScenarioConfig, fmt: str) -> None:
    for record in records:
        path = write_record(record, config.out_dir, fmt)
        print(f"wrote {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        if args.command == "chain-bench":
            records = run_chain_benchmark(config)
            _emit(records, config, args.format)
            print(f"speedup at max subchains: "
                  f"{records[0].metadata['speedup_at_max_subchains']:.2f}x")
            print(f"reduction at max txs: "
                  f"{records[1].metadata['reduction_at_max_txs']:.1%}")
        elif args.command == "protocol-sim":
            result, report, record = run_protocol_simulation(config, args.slots)
            _emit([record], config, args.format)
            out = Path(config.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "events.csv").write_text(
                f"# config_digest={config_digest(config)}\n" + export_event_csv_body(result)
            )
            (out / "audit.jsonl").write_text(export_audit_body(result))
            for name, ok in report.checks.items():
                print(f"audit {name}: {'pass' if ok else 'FAIL'}")
            if not report.passed:
                return EXIT_AUDIT
        elif args.command == "train":
            records, wall_clock, train_result = run_training_eval(config)
            _emit(records, config, args.format)
            out = Path(config.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_policies(
                out / "policies.bin", train_result.policies,
                config.training.history, config.economics.g_max,
            )
            print(f"wrote {out / 'policies.bin'}")
            for method, seconds in wall_clock.items():
                print(f"wall clock {method}: {seconds:.2f} s")
        elif args.command == "eval":
            return _run_eval(args, config)
        elif args.command == "sweep":
            record = sweep_and_export(config, args.sweep)
            _emit([record], config, args.format)
            for warning in record.metadata["warnings"]:
                print(f"warning: privacy-margin constraint violated at {warning}")
        elif args.command == "dope":
            record = dope_report(config)
            _emit([record], config, args.format)
            for lam, err, _ in record.series["relative_error"]:
                print(f"lambda={lam}: relative error {err:.4%}")
        elif args.command == "newsvendor":
            record = newsvendor_report(config)
            _emit([record], config, args.format)
            print(f"critical ratio: {record.metadata['critical_ratio']:.6f}")
    except (ConfigError, ValueError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _run_eval(args, config: ScenarioConfig) -> int:
    import numpy as np

    from ..madrl.baselines import baseline_policy, evaluate_policy
    from ..madrl.env import PseudonymGenEnv
    from ..madrl.mappo import evaluate_mappo, load_policies
    from ..privacy import time_average_dope

    policy_path = args.policies or str(Path(config.out_dir) / "policies.bin")
    if not Path(policy_path).exists():
        print(f"validation error: no policy file at {policy_path}", file=sys.stderr)
        return EXIT_VALIDATION
    policies, header = load_policies(policy_path)
    h_bar = time_average_dope(config.privacy.change_rate_per_min, config.privacy.bounds())

    def make_env(seed):
        return PseudonymGenEnv(
            config.economics, h_bar, history_len=header["history"],
            episode_len=config.training.steps, seed=seed,
        )

    from .experiments import BASELINE_KINDS, MetricsRecord, write_record

    record = MetricsRecord(
        "evaluation", metadata={"config_digest": config_digest(config), "seed": config.seed}
    )
    curve = evaluate_mappo(policies, make_env(config.seed + 1), args.episodes, seed=config.seed)
    record.add("mappo", "mean_reward", float(curve.mean()),
               float(curve.std(ddof=1) / np.sqrt(len(curve))))
    for kind in BASELINE_KINDS:
        policy = baseline_policy(kind, make_env(config.seed), config.economics, h_bar,
                                 seed=config.seed)
        base_curve = evaluate_policy(make_env(config.seed + 1), policy, args.episodes)
        record.add(kind, "mean_reward", float(base_curve.mean()),
                   float(base_curve.std(ddof=1) / np.sqrt(len(base_curve))))
    path = write_record(record, config.out_dir, args.format)
    print(f"wrote {path}")
    for name, points in sorted(record.series.items()):
        print(f"{name}: {points[0][1]:.2f}")
    return EXIT_OK


def export_event_csv_body(result) -> str:
    from ..scenario import export_event_csv

    return export_event_csv(result)


def export_audit_body(result) -> str:
    from ..scenario import export_audit_jsonl

    return export_audit_jsonl(result)


if __name__ == "__main__":
    sys.exit(main())
