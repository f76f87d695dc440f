"""Task routing: cache lookup, hit/miss plan-act loops, cache updates.

The miss path runs the expensive planner, then distills the finished log
into a template and inserts it. The hit path never touches the large
planner; if adaptation breaks down it escalates to a fresh miss-path run so
the user still gets a full-quality answer.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .errors import (
    EmptyKeyword,
    EscalationRequired,
    IncompleteLog,
    InvalidTemplate,
    MalformedGeneration,
    ProviderError,
)
from .gateway import Gateway, ModelRole, system, user
from .keywords import KeywordExtractor
from .ledger import LedgerRow
from .model import CacheEntry, ExecutionLog, TaskInstance, validate_workflow
from .prompts import (
    ACTOR_SYSTEM_PROMPT,
    BEST_EFFORT_FINAL_INSTRUCTION,
    PARSE_RETRY_INSTRUCTION,
    PLANNER_SYSTEM_PROMPT,
    build_actor_prompt,
    build_planner_prompt,
)
from .store import PlanCache
from .templates import TemplateEngine, strip_code_fence

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 10


class RunPath(str, Enum):
    HIT = "hit"
    MISS = "miss"
    HIT_ESCALATED_TO_MISS = "hit_escalated_to_miss"


@dataclass(frozen=True)
class RunOutcome:
    """Result of routing one task through the agent."""

    output: str
    path: RunPath
    iterations: int
    log: ExecutionLog
    cost_fragment: tuple[LedgerRow, ...]
    run_id: str
    keyword: str | None = None


@dataclass
class OrchestratorConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    # Strict gate: only insert templates whose run the judge scored correct.
    # Requires ground truth; off by default to match serving reality.
    strict_insert_gate: bool = False


# --------------------------------------------------------------------------
# Planner reply protocol


@dataclass(frozen=True)
class PlannerReply:
    reasoning: str
    message: str | None
    answer: str | None


def parse_planner_reply(text: str) -> PlannerReply:
    """Parse a planner JSON reply carrying exactly one of message/answer."""
    document = json.loads(strip_code_fence(text))
    if not isinstance(document, dict):
        raise ValueError("planner reply is not a JSON object")
    message = document.get("message")
    answer = document.get("answer")
    has_message = isinstance(message, str) and bool(message.strip())
    has_answer = isinstance(answer, str) and bool(answer.strip())
    if has_message == has_answer:
        raise ValueError('planner reply must carry exactly one of "message" or "answer"')
    reasoning = document.get("reasoning")
    return PlannerReply(
        reasoning=reasoning if isinstance(reasoning, str) else "",
        message=message if has_message else None,
        answer=answer if has_answer else None,
    )


@dataclass(frozen=True)
class LoopResult:
    final_output: str
    log: ExecutionLog
    hit_iteration_cap: bool


def plan_act_loop(
    gateway: Gateway,
    planner_role: ModelRole,
    task: TaskInstance,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    in_context_example: str | None = None,
) -> LoopResult:
    """Run the planner/actor loop until a final answer or the iteration cap.

    The planner sees the query and responses so far, never the context; the
    actor sees the context plus each plan. At the cap, the planner is asked
    once more for a best-effort final answer.
    """
    plans: list[str] = []
    responses: list[str] = []
    reasoning: list[str] = []
    final_output: str | None = None
    capped = False
    for _ in range(max_iterations):
        reply = _planner_turn(gateway, planner_role, task.query, plans, responses, in_context_example)
        if reply.reasoning:
            reasoning.append(reply.reasoning)
        if reply.answer is not None:
            final_output = reply.answer
            break
        actor = gateway.complete(
            ModelRole.ACTOR,
            [
                system(ACTOR_SYSTEM_PROMPT),
                user(build_actor_prompt(task.query, task.context, reply.message)),
            ],
        )
        plans.append(reply.message)
        responses.append(actor.response_text)
    if final_output is None:
        capped = True
        final_output = _best_effort_final(
            gateway, planner_role, task.query, plans, responses, in_context_example
        )
    log = ExecutionLog(
        entries=tuple(zip(plans, responses)),
        planner_reasoning=tuple(reasoning),
        final_output=final_output,
    )
    return LoopResult(final_output=final_output, log=log, hit_iteration_cap=capped)


def _planner_turn(
    gateway: Gateway,
    planner_role: ModelRole,
    query: str,
    plans: list[str],
    responses: list[str],
    in_context_example: str | None,
) -> PlannerReply:
    prompt = build_planner_prompt(query, plans, responses, in_context_example)
    exchange = gateway.complete(planner_role, [system(PLANNER_SYSTEM_PROMPT), user(prompt)])
    try:
        return parse_planner_reply(exchange.response_text)
    except ValueError as error:
        retry_prompt = prompt + "\n" + PARSE_RETRY_INSTRUCTION.format(error=error)
        exchange = gateway.complete(
            planner_role, [system(PLANNER_SYSTEM_PROMPT), user(retry_prompt)]
        )
        try:
            return parse_planner_reply(exchange.response_text)
        except ValueError:
            # Unstructured output twice in a row: take the raw text as the
            # final answer rather than failing the whole task.
            logger.warning("planner reply unparseable twice; treating raw text as answer")
            return PlannerReply(reasoning="", message=None, answer=exchange.response_text)


def _best_effort_final(
    gateway: Gateway,
    planner_role: ModelRole,
    query: str,
    plans: list[str],
    responses: list[str],
    in_context_example: str | None,
) -> str:
    prompt = (
        build_planner_prompt(query, plans, responses, in_context_example)
        + "\n"
        + BEST_EFFORT_FINAL_INSTRUCTION
    )
    exchange = gateway.complete(planner_role, [system(PLANNER_SYSTEM_PROMPT), user(prompt)])
    try:
        reply = parse_planner_reply(exchange.response_text)
        return reply.answer if reply.answer is not None else reply.message or exchange.response_text
    except ValueError:
        return exchange.response_text


# --------------------------------------------------------------------------
# Orchestrator


class Orchestrator:
    """Routes tasks through the plan cache per the hit/miss algorithms."""

    def __init__(
        self,
        gateway: Gateway,
        cache: PlanCache,
        *,
        config: OrchestratorConfig | None = None,
        engine: TemplateEngine | None = None,
        extractor: KeywordExtractor | None = None,
        correctness_judge: Callable[[TaskInstance, str], int] | None = None,
        run_id_prefix: str = "run",
    ):
        self.gateway = gateway
        self.cache = cache
        self.config = config or OrchestratorConfig()
        self.engine = engine or TemplateEngine(gateway)
        self.extractor = extractor or KeywordExtractor(gateway)
        self.correctness_judge = correctness_judge
        self.escalations: Counter[str] = Counter()
        self._run_id_prefix = run_id_prefix
        # itertools.count advances atomically under the GIL, so concurrent
        # run_task calls get distinct ids without extra locking.
        self._run_counter = itertools.count(1)

    def _next_run_id(self) -> str:
        return f"{self._run_id_prefix}-{next(self._run_counter)}"

    def run_task(self, task: TaskInstance) -> RunOutcome:
        """Extract the keyword, then dispatch to the hit or miss path."""
        run_id = self._next_run_id()
        with self.gateway.run_scope(run_id):
            try:
                keyword = self.extractor.extract_keyword(task.query)
            except EmptyKeyword:
                logger.info("task %s: empty keyword, forcing miss path without insertion", task.id)
                keyword = None
            entry = self.cache.lookup(keyword) if keyword is not None else None
            if entry is not None:
                outcome = self._hit(task, keyword, entry, run_id)
            else:
                outcome = self._miss(task, keyword, run_id)
        return outcome

    def handle_cache_hit(self, task: TaskInstance, entry: CacheEntry) -> RunOutcome:
        run_id = self._next_run_id()
        with self.gateway.run_scope(run_id):
            return self._hit(task, entry.keyword, entry, run_id)

    def handle_cache_miss(self, task: TaskInstance, keyword: str | None) -> RunOutcome:
        run_id = self._next_run_id()
        with self.gateway.run_scope(run_id):
            return self._miss(task, keyword, run_id)

    # -- internals -----------------------------------------------------------

    def _hit(
        self, task: TaskInstance, keyword: str, entry: CacheEntry, run_id: str
    ) -> RunOutcome:
        template = entry.template
        message_count = len(template.message_items)
        past_plans: list[str] = []
        past_responses: list[str] = []
        final_output: str | None = None
        try:
            while True:
                rounds = len(past_responses)
                if rounds < message_count and rounds >= self.config.max_iterations:
                    # The cursor guarantees the next step would be another
                    # plan, so escalate without burning an adaptation call.
                    raise EscalationRequired(
                        f"hit path for {keyword!r} exhausted {self.config.max_iterations} iterations"
                    )
                plan, final = self.engine.adapt_step(template, task, past_plans, past_responses)
                if final is not None:
                    final_output = final
                    break
                actor = self.gateway.complete(
                    ModelRole.ACTOR,
                    [
                        system(ACTOR_SYSTEM_PROMPT),
                        user(build_actor_prompt(task.query, task.context, plan)),
                    ],
                )
                past_plans.append(plan)
                past_responses.append(actor.response_text)
        except EscalationRequired as reason:
            self.escalations[keyword] += 1
            logger.info("task %s: escalating to miss path (%s)", task.id, reason)
            miss = self._miss(task, keyword, run_id)
            return RunOutcome(
                output=miss.output,
                path=RunPath.HIT_ESCALATED_TO_MISS,
                iterations=miss.iterations,
                log=miss.log,
                cost_fragment=miss.cost_fragment,
                run_id=run_id,
                keyword=keyword,
            )
        log = ExecutionLog(
            entries=tuple(zip(past_plans, past_responses)),
            planner_reasoning=(),
            final_output=final_output,
        )
        return RunOutcome(
            output=final_output,
            path=RunPath.HIT,
            iterations=log.iterations_used,
            log=log,
            cost_fragment=self._fragment(run_id),
            run_id=run_id,
            keyword=keyword,
        )

    def _miss(self, task: TaskInstance, keyword: str | None, run_id: str) -> RunOutcome:
        result = plan_act_loop(
            self.gateway,
            ModelRole.LARGE_PLANNER,
            task,
            max_iterations=self.config.max_iterations,
        )
        if keyword is not None and self._insertion_gate(task, result):
            self._try_insert(task, keyword, result.log)
        return RunOutcome(
            output=result.final_output,
            path=RunPath.MISS,
            iterations=result.log.iterations_used,
            log=result.log,
            cost_fragment=self._fragment(run_id),
            run_id=run_id,
            keyword=keyword,
        )

    def _insertion_gate(self, task: TaskInstance, result: LoopResult) -> bool:
        if result.hit_iteration_cap:
            return False
        if self.config.strict_insert_gate:
            if task.ground_truth is None or self.correctness_judge is None:
                return False
            return self.correctness_judge(task, result.final_output) == 1
        return True

    def _try_insert(self, task: TaskInstance, keyword: str, log: ExecutionLog) -> None:
        if keyword in self.cache:
            # First-writer-wins: the insert would no-op, so skip the
            # generation call entirely (escalated hits land here).
            return
        # A failed template must never fail the user's request.
        try:
            trace = self.engine.rule_filter(log)
            if not validate_workflow(trace):
                # Degenerate runs (e.g. zero rounds) cannot yield a usable
                # template; skip the generation call outright.
                logger.info("task %s: trace shape unusable, not caching", task.id)
                return
            template = self.engine.generalize(
                trace, keyword, task_query=task.query, task_context=task.context
            )
            self.cache.insert(keyword, template)
        except (MalformedGeneration, InvalidTemplate, IncompleteLog, ProviderError, ValueError) as exc:
            logger.warning("task %s: template not cached (%s)", task.id, exc)

    def _fragment(self, run_id: str) -> tuple[LedgerRow, ...]:
        ledger = self.gateway.ledger
        if ledger is None:
            return ()
        return ledger.rows_for_run(run_id)
