"""Benchmark harness: dataset loading, judging, strategy runs, reports.

Tasks are processed sequentially in arrival order with a cold cache by
default, so caches warm up within the run; per-task failures are scored as
incorrect and the run continues.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .baselines import (
    AccuracyOptimalStrategy,
    CostOptimalStrategy,
    FullHistoryCacheStrategy,
    FullHistoryStore,
    PlanCacheStrategy,
    SemanticCacheStore,
    SemanticCacheStrategy,
    StrategyKind,
)
from .errors import FormatError, PlanCacheError, ScriptExhausted, UnparseableVerdict
from .gateway import Gateway, ModelRole, OfflineEmbedder, cosine, user
from .keywords import normalize
from .ledger import CostBreakdown, CostLedger, breakdown
from .model import TaskInstance
from .orchestrator import Orchestrator, OrchestratorConfig, RunPath
from .prompts import JUDGE_RETRY_SUFFIX, build_judge_prompt
from .store import PlanCache

logger = logging.getLogger(__name__)

ZERO = Decimal("0")


# --------------------------------------------------------------------------
# Dataset loading


class TaskFormat(str, Enum):
    TASK_JSONL = "jsonl"
    FINANCEBENCH = "financebench"
    TABMWP = "tabmwp"


def load_tasks(path: str | Path, fmt: TaskFormat | str = TaskFormat.TASK_JSONL) -> list[TaskInstance]:
    """Load tasks from a dataset file into the canonical task shape.

    The canonical format is JSONL with one {"id", "query", "context",
    "answer"} record per line. The adapters map each dataset's published
    field names onto that shape; context always goes to the actor side only.
    """
    fmt = TaskFormat(fmt)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read task file {path}: {exc}") from exc
    if fmt is TaskFormat.TABMWP and _looks_like_problem_object(text):
        return _load_tabmwp_object(path, text)
    tasks = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise FormatError(f"{path}:{line_no}: record is not an object")
        tasks.append(_record_to_task(record, fmt, f"{path}:{line_no}", f"task-{line_no}"))
    return tasks


def _looks_like_problem_object(text: str) -> bool:
    # The published test split is one JSON object mapping problem ids to
    # problem records; a JSONL file parses as a flat record instead.
    try:
        document = json.loads(text)
    except json.JSONDecodeError:
        return False
    return isinstance(document, dict) and all(
        isinstance(value, dict) for value in document.values()
    )


def _load_tabmwp_object(path: Path, text: str) -> list[TaskInstance]:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise FormatError(f"{path}: expected an object mapping ids to problems")
    tasks = []
    for key, record in document.items():
        if not isinstance(record, dict):
            raise FormatError(f"{path}: record {key!r} is not an object")
        tasks.append(_record_to_task(record, TaskFormat.TABMWP, f"{path}: record {key!r}", str(key)))
    return tasks


_QUERY_FIELDS = {
    TaskFormat.TASK_JSONL: "query",
    TaskFormat.FINANCEBENCH: "question",
    TaskFormat.TABMWP: "question",
}


def _record_to_task(
    record: Mapping[str, Any], fmt: TaskFormat, where: str, fallback_id: str
) -> TaskInstance:
    query_field = _QUERY_FIELDS[fmt]
    query = record.get(query_field)
    if not isinstance(query, str) or not query.strip():
        raise FormatError(f"{where}: missing or empty {query_field!r} field")
    if fmt is TaskFormat.TASK_JSONL:
        context = record.get("context", "")
    elif fmt is TaskFormat.FINANCEBENCH:
        context = record.get("document", record.get("context", ""))
    else:
        table = record.get("table", "")
        title = record.get("table_title", "")
        context = f"{title}\n{table}".strip() if title else table
    answer = record.get("answer")
    task_id = str(record.get("id", record.get("financebench_id", fallback_id)))
    return TaskInstance(
        id=task_id,
        query=query,
        context=context if isinstance(context, str) else json.dumps(context),
        ground_truth=str(answer) if answer is not None else None,
    )


# --------------------------------------------------------------------------
# LLM-as-judge


@dataclass(frozen=True)
class JudgeVerdict:
    score: int
    flagged: bool = False


def judge(gateway: Gateway, task: TaskInstance, response: str) -> JudgeVerdict:
    """Grade a response against ground truth: strict '1'/'0' verdicts only.

    The first non-whitespace character of the reply decides. Anything else
    triggers one retry; a second unparseable reply scores 0 and is flagged.
    """
    if task.ground_truth is None:
        raise ValueError(f"task {task.id!r} has no ground truth to judge against")
    prompt = build_judge_prompt(task.query, task.ground_truth, response)
    try:
        return JudgeVerdict(_strict_verdict(gateway, prompt))
    except UnparseableVerdict:
        pass
    try:
        return JudgeVerdict(_strict_verdict(gateway, prompt + JUDGE_RETRY_SUFFIX))
    except UnparseableVerdict:
        logger.warning("task %s: judge verdict unparseable twice, scoring 0", task.id)
        return JudgeVerdict(score=0, flagged=True)


def _strict_verdict(gateway: Gateway, prompt: str) -> int:
    exchange = gateway.complete(ModelRole.JUDGE, [user(prompt)])
    stripped = exchange.response_text.strip()
    if stripped.startswith("1"):
        return 1
    if stripped.startswith("0"):
        return 0
    raise UnparseableVerdict(f"judge replied {exchange.response_text!r}")


# --------------------------------------------------------------------------
# Benchmark runs


@dataclass
class BenchConfig:
    threshold: float = 0.9
    max_iterations: int = 10
    strict_insert_gate: bool = False
    cache_capacity: int | None = None
    warm_cache_path: str | None = None
    budget_usd: Decimal | None = None
    sample_size: int | None = None
    sample_seed: int | None = None


@dataclass(frozen=True)
class TaskRow:
    task_id: str
    keyword: str | None
    path: str
    correct: int | None
    flagged: bool
    iterations: int
    serving_usd: Decimal
    output: str


@dataclass(frozen=True)
class RunReport:
    strategy: StrategyKind
    total_tasks: int
    accuracy: float | None
    total_cost_usd: Decimal
    hit_rate: float | None
    accuracy_on_hits: float | None
    accuracy_on_misses: float | None
    cost_breakdown: CostBreakdown
    per_task: tuple[TaskRow, ...]
    sample_seed: int | None
    aborted: bool

    def as_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy.value,
            "total_tasks": self.total_tasks,
            "accuracy": self.accuracy,
            "total_cost_usd": str(self.total_cost_usd),
            "hit_rate": self.hit_rate,
            "accuracy_on_hits": self.accuracy_on_hits,
            "accuracy_on_misses": self.accuracy_on_misses,
            "cost_breakdown": {
                "rows": self.cost_breakdown.formatted_rows(),
                "overhead_usd": str(self.cost_breakdown.overhead_usd),
                "overhead_fraction": str(self.cost_breakdown.overhead_fraction),
                "evaluation_usd": str(self.cost_breakdown.evaluation_usd),
            },
            "sample_seed": self.sample_seed,
            "aborted": self.aborted,
            "per_task": [
                {
                    "task_id": row.task_id,
                    "keyword": row.keyword,
                    "path": row.path,
                    "correct": row.correct,
                    "flagged": row.flagged,
                    "iterations": row.iterations,
                    "serving_usd": str(row.serving_usd),
                    "output": row.output,
                }
                for row in self.per_task
            ],
        }


def build_strategy(kind: StrategyKind | str, gateway: Gateway, config: BenchConfig):
    """Assemble a strategy instance, warming its cache when asked to."""
    kind = StrategyKind(kind)
    if kind is StrategyKind.ACCURACY_OPTIMAL:
        return AccuracyOptimalStrategy(gateway, max_iterations=config.max_iterations)
    if kind is StrategyKind.COST_OPTIMAL:
        return CostOptimalStrategy(gateway, max_iterations=config.max_iterations)
    if kind is StrategyKind.SEMANTIC_CACHE:
        store = (
            SemanticCacheStore.load(config.warm_cache_path)
            if config.warm_cache_path
            else SemanticCacheStore()
        )
        return SemanticCacheStrategy(
            gateway, threshold=config.threshold, store=store, max_iterations=config.max_iterations
        )
    if kind is StrategyKind.FULL_HISTORY_CACHE:
        store = (
            FullHistoryStore.load(config.warm_cache_path)
            if config.warm_cache_path
            else FullHistoryStore()
        )
        return FullHistoryCacheStrategy(
            gateway, store=store, max_iterations=config.max_iterations
        )
    cache = (
        PlanCache.load(config.warm_cache_path, capacity=config.cache_capacity)
        if config.warm_cache_path
        else PlanCache(capacity=config.cache_capacity)
    )
    orchestrator = Orchestrator(
        gateway,
        cache,
        config=OrchestratorConfig(
            max_iterations=config.max_iterations,
            strict_insert_gate=config.strict_insert_gate,
        ),
        correctness_judge=(
            (lambda task, response: judge(gateway, task, response).score)
            if config.strict_insert_gate
            else None
        ),
    )
    return PlanCacheStrategy(orchestrator)


def run_benchmark(
    strategy: StrategyKind | str | Any,
    tasks: Sequence[TaskInstance],
    config: BenchConfig,
    gateway: Gateway,
) -> RunReport:
    """Run one strategy over a task list and assemble the report.

    ``strategy`` is a StrategyKind (built here) or an already assembled
    strategy instance. Cache state carries across tasks in arrival order.
    Per-task failures are recorded as incorrect and the run continues; a
    configured budget aborts the run once serving spend crosses it.
    """
    if isinstance(strategy, (StrategyKind, str)):
        strategy = build_strategy(StrategyKind(strategy), gateway, config)
    strategy_kind = strategy.kind
    tasks = list(tasks)
    if config.sample_size is not None and config.sample_size < len(tasks):
        rng = random.Random(config.sample_seed)
        tasks = rng.sample(tasks, config.sample_size)
    ledger: CostLedger | None = gateway.ledger
    rows: list[TaskRow] = []
    aborted = False
    for task in tasks:
        try:
            outcome = strategy.run_task(task)
        except ScriptExhausted:
            raise  # broken fixture, never a runtime condition
        except PlanCacheError as exc:
            logger.warning("task %s failed: %s", task.id, exc)
            rows.append(
                TaskRow(
                    task_id=task.id,
                    keyword=None,
                    path="error",
                    correct=0 if task.ground_truth is not None else None,
                    flagged=False,
                    iterations=0,
                    serving_usd=ZERO,
                    output=f"<error: {exc}>",
                )
            )
            continue
        correct: int | None = None
        flagged = False
        if task.ground_truth is not None:
            with gateway.run_scope(outcome.run_id):
                verdict = judge(gateway, task, outcome.output)
            correct, flagged = verdict.score, verdict.flagged
        serving_usd = sum(
            (r.usd for r in outcome.cost_fragment if not _is_evaluation_row(r)), start=ZERO
        )
        rows.append(
            TaskRow(
                task_id=task.id,
                keyword=outcome.keyword,
                path=outcome.path.value,
                correct=correct,
                flagged=flagged,
                iterations=outcome.iterations,
                serving_usd=serving_usd,
                output=outcome.output,
            )
        )
        if config.budget_usd is not None and ledger is not None:
            spent = breakdown(ledger.rows).total_usd
            if spent >= config.budget_usd:
                logger.warning("budget %s reached after task %s, aborting", config.budget_usd, task.id)
                aborted = True
                break
    return _assemble_report(strategy_kind, rows, ledger, config, aborted)


def _is_evaluation_row(row) -> bool:
    return row.component.value in ("judge", "embedding")


_CACHING_STRATEGIES = {
    StrategyKind.PLAN_CACHE,
    StrategyKind.SEMANTIC_CACHE,
    StrategyKind.FULL_HISTORY_CACHE,
}


def _ratio(numerator: int, denominator: int) -> float | None:
    return numerator / denominator if denominator else None


def _assemble_report(
    strategy_kind: StrategyKind,
    rows: list[TaskRow],
    ledger: CostLedger | None,
    config: BenchConfig,
    aborted: bool,
) -> RunReport:
    judged = [r for r in rows if r.correct is not None]
    hits = [r for r in rows if r.path == RunPath.HIT.value]
    non_hits = [r for r in rows if r.path != RunPath.HIT.value]
    judged_hits = [r for r in hits if r.correct is not None]
    judged_misses = [r for r in non_hits if r.correct is not None]
    # Error rows never reached the cache, so they stay out of the hit rate
    # (they still count against accuracy, on the miss side of the split).
    cache_rows = [r for r in rows if r.path != "error"]
    caching = strategy_kind in _CACHING_STRATEGIES
    cost = breakdown(ledger.rows if ledger is not None else [])
    return RunReport(
        strategy=strategy_kind,
        total_tasks=len(rows),
        accuracy=_ratio(sum(r.correct for r in judged), len(judged)),
        total_cost_usd=cost.total_usd,
        hit_rate=_ratio(len(hits), len(cache_rows)) if caching else None,
        accuracy_on_hits=(
            _ratio(sum(r.correct for r in judged_hits), len(judged_hits)) if caching else None
        ),
        accuracy_on_misses=(
            _ratio(sum(r.correct for r in judged_misses), len(judged_misses)) if caching else None
        ),
        cost_breakdown=cost,
        per_task=tuple(rows),
        sample_seed=config.sample_seed,
        aborted=aborted,
    )


def emit_report(report: RunReport, directory: str | Path, ledger: CostLedger | None = None) -> None:
    """Write report.json, per_task.csv, and optionally ledger.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "report.json", "w", encoding="utf-8") as handle:
        json.dump(report.as_dict(), handle, ensure_ascii=False, indent=2)
        handle.write("\n")
    with open(directory / "per_task.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["task_id", "keyword", "path", "correct", "flagged", "iterations", "serving_usd", "output"]
        )
        for row in report.per_task:
            writer.writerow(
                [
                    row.task_id,
                    row.keyword or "",
                    row.path,
                    "" if row.correct is None else row.correct,
                    int(row.flagged),
                    row.iterations,
                    str(row.serving_usd),
                    row.output,
                ]
            )
    if ledger is not None:
        ledger.export_csv(directory / "ledger.csv")


# --------------------------------------------------------------------------
# Matching analysis (keyword equality vs. query similarity)


@dataclass(frozen=True)
class LabeledPair:
    """Two queries plus their extracted keywords, labeled same/different plan."""

    query_a: str
    query_b: str
    keyword_a: str
    keyword_b: str
    same_plan: bool


@dataclass(frozen=True)
class ThresholdPoint:
    threshold: float
    fp_rate: float
    fn_rate: float


@dataclass(frozen=True)
class MatchAnalysisReport:
    query_points: tuple[ThresholdPoint, ...]
    keyword_fp_rate: float
    keyword_fn_rate: float


def matching_analysis(
    pairs: Sequence[LabeledPair],
    thresholds: Sequence[float],
    embedder: OfflineEmbedder | None = None,
) -> MatchAnalysisReport:
    """Compare query-similarity matching with exact keyword matching.

    A false positive is a matched pair labeled different-plan; a false
    negative is an unmatched pair labeled same-plan. Rates are fractions of
    all labeled pairs.
    """
    if not pairs:
        raise ValueError("matching analysis needs at least one labeled pair")
    embedder = embedder or OfflineEmbedder()
    similarities = [
        cosine(embedder.embed(p.query_a), embedder.embed(p.query_b)) for p in pairs
    ]
    total = len(pairs)
    points = []
    for threshold in thresholds:
        fp = sum(1 for p, sim in zip(pairs, similarities) if sim >= threshold and not p.same_plan)
        fn = sum(1 for p, sim in zip(pairs, similarities) if sim < threshold and p.same_plan)
        points.append(ThresholdPoint(threshold=threshold, fp_rate=fp / total, fn_rate=fn / total))
    kw_fp = sum(
        1 for p in pairs if normalize(p.keyword_a) == normalize(p.keyword_b) and not p.same_plan
    )
    kw_fn = sum(
        1 for p in pairs if normalize(p.keyword_a) != normalize(p.keyword_b) and p.same_plan
    )
    return MatchAnalysisReport(
        query_points=tuple(points),
        keyword_fp_rate=kw_fp / total,
        keyword_fn_rate=kw_fn / total,
    )


def load_labeled_pairs(path: str | Path) -> list[LabeledPair]:
    """Read labeled pairs from JSONL: query_a/query_b/keyword_a/keyword_b/label."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read pairs file {path}: {exc}") from exc
    pairs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            label = record["label"]
            if label not in ("same_plan", "different_plan"):
                raise FormatError(
                    f"{path}:{line_no}: label must be 'same_plan' or 'different_plan'"
                )
            pairs.append(
                LabeledPair(
                    query_a=record["query_a"],
                    query_b=record["query_b"],
                    keyword_a=record["keyword_a"],
                    keyword_b=record["keyword_b"],
                    same_plan=(label == "same_plan"),
                )
            )
        except FormatError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{line_no}: malformed pair record: {exc}") from exc
    return pairs


def emit_matching_report(report: MatchAnalysisReport, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "matching.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["matcher", "threshold", "fp_rate", "fn_rate"])
        for point in report.query_points:
            writer.writerow(["query", point.threshold, point.fp_rate, point.fn_rate])
        writer.writerow(["keyword", "", report.keyword_fp_rate, report.keyword_fn_rate])
