"""The four comparison strategies, plus the plan cache behind one interface.

Every strategy exposes ``run_task(task) -> RunOutcome`` so the benchmark
harness treats all five systems uniformly. Each caching strategy owns its
own store; persistence reuses the plan-cache document format with a
``payload_kind`` discriminator.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from .errors import EmptyKeyword, PersistenceError
from .gateway import Gateway, ModelRole, cosine
from .keywords import KeywordExtractor, normalize
from .ledger import LedgerRow
from .model import ExecutionLog, TaskInstance
from .orchestrator import (
    DEFAULT_MAX_ITERATIONS,
    Orchestrator,
    RunOutcome,
    RunPath,
    plan_act_loop,
)
from .store import (
    SCHEMA_VERSION,
    CacheStats,
    PlanCache,
    read_cache_document,
    write_cache_document,
)

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    ACCURACY_OPTIMAL = "accuracy-opt"
    COST_OPTIMAL = "cost-opt"
    SEMANTIC_CACHE = "semantic"
    FULL_HISTORY_CACHE = "full-history"
    PLAN_CACHE = "plan"


# --------------------------------------------------------------------------
# Execution log serialization (full-history payloads and in-context examples)


def log_to_dict(log: ExecutionLog) -> dict[str, Any]:
    return {
        "entries": [[plan, response] for plan, response in log.entries],
        "planner_reasoning": list(log.planner_reasoning),
        "final_output": log.final_output,
    }


def log_from_dict(data: Mapping[str, Any]) -> ExecutionLog:
    return ExecutionLog(
        entries=tuple((e[0], e[1]) for e in data["entries"]),
        planner_reasoning=tuple(data.get("planner_reasoning", [])),
        final_output=data.get("final_output"),
    )


def render_log_as_example(log: ExecutionLog) -> str:
    """Render a raw log, reasoning included, as plain text for prompting.

    Plain text (not JSON) so the cached reasoning appears verbatim in the
    prompt instead of escaped.
    """
    lines: list[str] = []
    reasoning = list(log.planner_reasoning)
    for round_no, (plan, response) in enumerate(log.entries, start=1):
        if round_no - 1 < len(reasoning):
            lines.append(f"Planner reasoning (round {round_no}): {reasoning[round_no - 1]}")
        lines.append(f"Plan (round {round_no}): {plan}")
        lines.append(f"Actor response (round {round_no}): {response}")
    for extra in reasoning[len(log.entries):]:
        lines.append(f"Planner reasoning (final): {extra}")
    if log.final_output is not None:
        lines.append(f"Final output: {log.final_output}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# No-cache baselines


class AccuracyOptimalStrategy:
    """Always plans with the large model; never reads or writes any cache."""

    kind = StrategyKind.ACCURACY_OPTIMAL
    cache = None

    def __init__(self, gateway: Gateway, max_iterations: int = DEFAULT_MAX_ITERATIONS):
        self.gateway = gateway
        self.max_iterations = max_iterations
        self._run_counter = itertools.count(1)
        self._planner_role = ModelRole.LARGE_PLANNER

    def run_task(self, task: TaskInstance) -> RunOutcome:
        run_id = f"{self.kind.value}-{next(self._run_counter)}"
        with self.gateway.run_scope(run_id):
            result = plan_act_loop(
                self.gateway, self._planner_role, task, max_iterations=self.max_iterations
            )
        return RunOutcome(
            output=result.final_output,
            path=RunPath.MISS,
            iterations=result.log.iterations_used,
            log=result.log,
            cost_fragment=_fragment(self.gateway, run_id),
            run_id=run_id,
            keyword=None,
        )

    def save_state(self, path: str) -> None:  # no cache to persist
        pass

    def load_state(self, path: str) -> None:
        pass


class CostOptimalStrategy(AccuracyOptimalStrategy):
    """Always plans with the small model; the cost floor, not a cache."""

    kind = StrategyKind.COST_OPTIMAL

    def __init__(self, gateway: Gateway, max_iterations: int = DEFAULT_MAX_ITERATIONS):
        super().__init__(gateway, max_iterations)
        self._run_counter = itertools.count(1)
        self._planner_role = ModelRole.SMALL_PLANNER


# --------------------------------------------------------------------------
# Semantic (query-similarity) caching


@dataclass(frozen=True)
class SemanticEntry:
    query: str
    embedding: Any
    answer: str


class SemanticCacheStore:
    """Stores (query embedding, answer) pairs; matches by cosine similarity.

    Every served query is indexed, hits included, so the candidate set a
    task is matched against does not depend on the threshold. That keeps
    hit sets monotone in the threshold on a fixed workload.
    """

    def __init__(self) -> None:
        self.stats = CacheStats()
        self._entries: list[SemanticEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> tuple[SemanticEntry, ...]:
        return tuple(self._entries)

    def best_match(self, embedding: Any) -> tuple[float, SemanticEntry | None]:
        best_sim, best_entry = 0.0, None
        for entry in self._entries:
            sim = cosine(embedding, entry.embedding)
            if best_entry is None or sim > best_sim:
                best_sim, best_entry = sim, entry
        return best_sim, best_entry

    def add(self, query: str, embedding: Any, answer: str) -> None:
        self._entries.append(SemanticEntry(query=query, embedding=embedding, answer=answer))
        self.stats.insertions += 1

    def save(self, path: str) -> None:
        document = {
            "schema_version": SCHEMA_VERSION,
            "payload_kind": "answer_pair",
            "entries": [
                {"query": e.query, "embedding": e.embedding, "answer": e.answer}
                for e in self._entries
            ],
            "stats": self.stats.as_dict(),
        }
        write_cache_document(path, document)

    @classmethod
    def load(cls, path: str) -> "SemanticCacheStore":
        document = read_cache_document(path, expected_payload_kind="answer_pair")
        store = cls()
        try:
            for record in document["entries"]:
                store._entries.append(
                    SemanticEntry(
                        query=record["query"],
                        embedding=record["embedding"],
                        answer=record["answer"],
                    )
                )
        except (KeyError, TypeError) as exc:
            raise PersistenceError(f"semantic cache file {path} is malformed: {exc}") from exc
        store.stats = CacheStats.from_dict(document.get("stats", {}))
        return store


class SemanticCacheStrategy:
    """GPTCache-style baseline: reuse final answers for similar queries."""

    kind = StrategyKind.SEMANTIC_CACHE

    def __init__(
        self,
        gateway: Gateway,
        threshold: float,
        store: SemanticCacheStore | None = None,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
    ):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        self.gateway = gateway
        self.threshold = threshold
        self.cache = store or SemanticCacheStore()
        self.max_iterations = max_iterations
        self._run_counter = itertools.count(1)

    def run_task(self, task: TaskInstance) -> RunOutcome:
        run_id = f"{self.kind.value}-{next(self._run_counter)}"
        with self.gateway.run_scope(run_id):
            embedding = self.gateway.embed(task.query)
            similarity, entry = self.cache.best_match(embedding)
            if entry is not None and similarity >= self.threshold:
                self.cache.stats.hits += 1
                self.cache.add(task.query, embedding, entry.answer)
                log = ExecutionLog(entries=(), planner_reasoning=(), final_output=entry.answer)
                return RunOutcome(
                    output=entry.answer,
                    path=RunPath.HIT,
                    iterations=0,
                    log=log,
                    cost_fragment=_fragment(self.gateway, run_id),
                    run_id=run_id,
                    keyword=None,
                )
            self.cache.stats.misses += 1
            result = plan_act_loop(
                self.gateway, ModelRole.LARGE_PLANNER, task, max_iterations=self.max_iterations
            )
            self.cache.add(task.query, embedding, result.final_output)
        return RunOutcome(
            output=result.final_output,
            path=RunPath.MISS,
            iterations=result.log.iterations_used,
            log=result.log,
            cost_fragment=_fragment(self.gateway, run_id),
            run_id=run_id,
            keyword=None,
        )

    def save_state(self, path: str) -> None:
        self.cache.save(path)

    def load_state(self, path: str) -> None:
        self.cache = SemanticCacheStore.load(path)


# --------------------------------------------------------------------------
# Full-history caching


class FullHistoryStore:
    """Keyword-indexed store of raw execution logs (first-writer-wins)."""

    def __init__(self) -> None:
        self.stats = CacheStats()
        self._entries: dict[str, ExecutionLog] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, keyword: str) -> ExecutionLog | None:
        key = normalize(keyword)
        log = self._entries.get(key)
        if log is None:
            self.stats.misses += 1
        else:
            self.stats.hits += 1
        return log

    def insert(self, keyword: str, log: ExecutionLog) -> None:
        key = normalize(keyword)
        if key in self._entries:
            return
        self._entries[key] = log
        self.stats.insertions += 1

    def save(self, path: str) -> None:
        document = {
            "schema_version": SCHEMA_VERSION,
            "payload_kind": "raw_log",
            "entries": [
                {"keyword": keyword, "log": log_to_dict(log)}
                for keyword, log in self._entries.items()
            ],
            "stats": self.stats.as_dict(),
        }
        write_cache_document(path, document)

    @classmethod
    def load(cls, path: str) -> "FullHistoryStore":
        document = read_cache_document(path, expected_payload_kind="raw_log")
        store = cls()
        try:
            for record in document["entries"]:
                store._entries[record["keyword"]] = log_from_dict(record["log"])
        except (KeyError, TypeError, IndexError) as exc:
            raise PersistenceError(f"full-history cache file {path} is malformed: {exc}") from exc
        store.stats = CacheStats.from_dict(document.get("stats", {}))
        return store


class FullHistoryCacheStrategy:
    """Caches raw logs and replays them as in-context examples on hits.

    Shares the keyword extractor with the plan cache so the only variable
    under test is template filtering versus unfiltered history.
    """

    kind = StrategyKind.FULL_HISTORY_CACHE

    def __init__(
        self,
        gateway: Gateway,
        store: FullHistoryStore | None = None,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        extractor: KeywordExtractor | None = None,
    ):
        self.gateway = gateway
        self.cache = store or FullHistoryStore()
        self.max_iterations = max_iterations
        self.extractor = extractor or KeywordExtractor(gateway)
        self._run_counter = itertools.count(1)

    def run_task(self, task: TaskInstance) -> RunOutcome:
        run_id = f"{self.kind.value}-{next(self._run_counter)}"
        with self.gateway.run_scope(run_id):
            try:
                keyword = self.extractor.extract_keyword(task.query)
            except EmptyKeyword:
                keyword = None
            cached_log = self.cache.lookup(keyword) if keyword is not None else None
            if cached_log is not None:
                result = plan_act_loop(
                    self.gateway,
                    ModelRole.SMALL_PLANNER,
                    task,
                    max_iterations=self.max_iterations,
                    in_context_example=render_log_as_example(cached_log),
                )
                path = RunPath.HIT
            else:
                result = plan_act_loop(
                    self.gateway,
                    ModelRole.LARGE_PLANNER,
                    task,
                    max_iterations=self.max_iterations,
                )
                path = RunPath.MISS
                if keyword is not None and not result.hit_iteration_cap:
                    self.cache.insert(keyword, result.log)
        return RunOutcome(
            output=result.final_output,
            path=path,
            iterations=result.log.iterations_used,
            log=result.log,
            cost_fragment=_fragment(self.gateway, run_id),
            run_id=run_id,
            keyword=keyword,
        )

    def save_state(self, path: str) -> None:
        self.cache.save(path)

    def load_state(self, path: str) -> None:
        self.cache = FullHistoryStore.load(path)


# --------------------------------------------------------------------------
# Plan caching, wrapped to match the strategy interface


class PlanCacheStrategy:
    """Agentic plan caching: the system under test."""

    kind = StrategyKind.PLAN_CACHE

    def __init__(self, orchestrator: Orchestrator):
        self.orchestrator = orchestrator
        self.gateway = orchestrator.gateway

    @property
    def cache(self) -> PlanCache:
        return self.orchestrator.cache

    def run_task(self, task: TaskInstance) -> RunOutcome:
        return self.orchestrator.run_task(task)

    def save_state(self, path: str) -> None:
        self.cache.save(path)

    def load_state(self, path: str) -> None:
        self.orchestrator.cache = PlanCache.load(path)


def _fragment(gateway: Gateway, run_id: str) -> tuple[LedgerRow, ...]:
    ledger = gateway.ledger
    if ledger is None:
        return ()
    return ledger.rows_for_run(run_id)
