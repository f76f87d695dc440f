"""Command-line interface for benchmark runs and matching analysis."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .bench import (
    BenchConfig,
    TaskFormat,
    build_strategy,
    emit_matching_report,
    emit_report,
    load_labeled_pairs,
    load_tasks,
    matching_analysis,
    run_benchmark,
)
from .baselines import StrategyKind
from .errors import ConfigError, FormatError, PersistenceError
from .gateway import (
    Gateway,
    live_gateway_from_config,
    pricing_from_config,
    scripted_gateway_from_doc,
)
from .ledger import CostLedger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plancache",
        description="Plan-template caching for Plan-Act agents: benchmark runner and analysis tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one strategy over a task file and emit a report")
    run.add_argument(
        "--strategy",
        required=True,
        choices=[k.value for k in StrategyKind],
        help="which system to run",
    )
    run.add_argument("--tasks", required=True, help="task dataset file")
    run.add_argument(
        "--format",
        default=TaskFormat.TASK_JSONL.value,
        choices=[f.value for f in TaskFormat],
        help="task file format",
    )
    run.add_argument("--cache", help="cache file to save after the run")
    run.add_argument(
        "--warm-cache",
        action="store_true",
        help="load --cache before the run instead of starting cold",
    )
    run.add_argument(
        "--provider",
        default="live",
        help="'live' or 'scripted:FILE' (deterministic playback)",
    )
    run.add_argument("--provider-config", help="provider config JSON (models, base URLs, pricing)")
    run.add_argument("--threshold", type=float, default=0.9, help="semantic-cache similarity threshold")
    run.add_argument("--max-iters", type=int, default=10, help="plan-act iteration cap")
    run.add_argument(
        "--strict-insert-gate",
        action="store_true",
        help="only cache templates from runs the judge scored correct",
    )
    run.add_argument("--cache-capacity", type=int, help="LRU capacity for the plan cache")
    run.add_argument("--budget-usd", help="abort the run once serving spend reaches this amount")
    run.add_argument("--sample", type=int, help="sample this many tasks before running")
    run.add_argument("--sample-seed", type=int, help="seed for task sampling, recorded in the report")
    run.add_argument("--report", help="directory for report.json / per_task.csv / ledger.csv")

    match = sub.add_parser("match", help="false-positive/negative analysis of cache matching")
    match.add_argument("--pairs", required=True, help="labeled pair file (JSONL)")
    match.add_argument(
        "--thresholds",
        default="0:1:21",
        help="comma list of thresholds, or start:stop:count sweep (default 0:1:21)",
    )
    match.add_argument("--report", help="directory for matching.csv")
    return parser


def _parse_thresholds(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"threshold sweep must be start:stop:count, got {spec!r}")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"bad threshold sweep {spec!r}: {exc}") from exc
        if count < 2:
            raise ConfigError("threshold sweep needs at least 2 points")
        step = (stop - start) / (count - 1)
        return [start + i * step for i in range(count)]
    try:
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad threshold list {spec!r}: {exc}") from exc


def _build_gateway(args: argparse.Namespace) -> tuple[Gateway, CostLedger]:
    provider_config = {}
    if args.provider_config:
        try:
            provider_config = json.loads(Path(args.provider_config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read provider config {args.provider_config!r}: {exc}") from exc
    spec = args.provider
    if spec.startswith("scripted:"):
        script_path = spec.split(":", 1)[1]
        try:
            doc = json.loads(Path(script_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read script file {script_path!r}: {exc}") from exc
        pricing = pricing_from_config({**provider_config, **doc})
        ledger = CostLedger(pricing)
        gateway, _ = scripted_gateway_from_doc(doc, ledger=ledger)
        return gateway, ledger
    if spec == "live":
        pricing = pricing_from_config(provider_config)
        ledger = CostLedger(pricing)
        gateway = live_gateway_from_config(provider_config or None, ledger=ledger)
        return gateway, ledger
    raise ConfigError(f"--provider must be 'live' or 'scripted:FILE', got {spec!r}")


def _cmd_run(args: argparse.Namespace) -> int:
    budget = None
    if args.budget_usd is not None:
        try:
            budget = Decimal(args.budget_usd)
        except InvalidOperation as exc:
            raise ConfigError(f"bad --budget-usd {args.budget_usd!r}") from exc
    if args.warm_cache and not args.cache:
        raise ConfigError("--warm-cache requires --cache FILE")
    gateway, ledger = _build_gateway(args)
    tasks = load_tasks(args.tasks, args.format)
    config = BenchConfig(
        threshold=args.threshold,
        max_iterations=args.max_iters,
        strict_insert_gate=args.strict_insert_gate,
        cache_capacity=args.cache_capacity,
        warm_cache_path=args.cache if args.warm_cache else None,
        budget_usd=budget,
        sample_size=args.sample,
        sample_seed=args.sample_seed,
    )
    strategy = build_strategy(args.strategy, gateway, config)
    report = run_benchmark(strategy, tasks, config, gateway)
    if args.cache:
        strategy.save_state(args.cache)
    if args.report:
        emit_report(report, args.report, ledger=ledger)
    _print_summary(report)
    return EXIT_OK


def _print_summary(report) -> None:
    print(f"strategy: {report.strategy.value}")
    print(f"tasks: {report.total_tasks}" + (" (aborted on budget)" if report.aborted else ""))
    if report.accuracy is not None:
        print(f"accuracy: {report.accuracy:.4f}")
    if report.hit_rate is not None:
        print(f"hit_rate: {report.hit_rate:.4f}")
        if report.accuracy_on_hits is not None:
            print(f"accuracy_on_hits: {report.accuracy_on_hits:.4f}")
        if report.accuracy_on_misses is not None:
            print(f"accuracy_on_misses: {report.accuracy_on_misses:.4f}")
    for name, formatted in report.cost_breakdown.formatted_rows():
        print(f"{name}: {formatted}")


def _cmd_match(args: argparse.Namespace) -> int:
    pairs = load_labeled_pairs(args.pairs)
    thresholds = _parse_thresholds(args.thresholds)
    report = matching_analysis(pairs, thresholds)
    if args.report:
        emit_matching_report(report, args.report)
    print(f"pairs: {len(pairs)}")
    print(f"keyword matching: fp_rate={report.keyword_fp_rate:.4f} fn_rate={report.keyword_fn_rate:.4f}")
    for point in report.query_points:
        print(
            f"query threshold={point.threshold:.4f}: "
            f"fp_rate={point.fp_rate:.4f} fn_rate={point.fn_rate:.4f}"
        )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_match(args)
    except (ConfigError, FormatError, PersistenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
