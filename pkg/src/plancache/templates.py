"""Template extraction and adaptation.

Extraction is two-step: a deterministic rule-based filter turns an execution
log into an ordered message/output/answer trace (dropping verbose planner
reasoning), then a lightweight model generalizes that trace into a reusable,
context-free template. Adaptation walks a cached template cursor-wise: one
adapted plan per template message, then the final answer once the messages
are exhausted.
"""

from __future__ import annotations

import json
import logging
import re
from typing import Sequence

from .errors import (
    EscalationRequired,
    IncompleteLog,
    InvalidTemplate,
    MalformedAdaptation,
    MalformedGeneration,
    TemplateExhausted,
)
from .gateway import Gateway, ModelRole, user
from .model import (
    ExecutionLog,
    PlanTemplate,
    TaskInstance,
    WorkflowItem,
    WorkflowKind,
    validate_workflow,
)
from .prompts import (
    PARSE_RETRY_INSTRUCTION,
    build_adaptation_prompt,
    build_cache_generation_prompt,
    build_final_answer_prompt,
)

logger = logging.getLogger(__name__)

FilteredTrace = tuple[WorkflowItem, ...]

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\n(.*)\n```$", re.DOTALL)


def strip_code_fence(text: str) -> str:
    match = _FENCE_RE.match(text.strip())
    return match.group(1) if match else text.strip()


class _ParseFailure(Exception):
    pass


def _parse_template_reply(text: str) -> tuple[str, tuple[WorkflowItem, ...]]:
    """Parse a generator reply into (task_summary, workflow items).

    Structural problems (bad JSON, missing keys, unknown kinds, empty
    content) are parse failures and retryable; a structurally fine reply
    whose step sequence breaks the workflow grammar is not.
    """
    try:
        document = json.loads(strip_code_fence(text))
    except json.JSONDecodeError as exc:
        raise _ParseFailure(f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise _ParseFailure("reply is not a JSON object")
    if "task" not in document or "workflow" not in document:
        raise _ParseFailure('reply must contain "task" and "workflow" keys')
    task_summary = document["task"]
    raw_workflow = document["workflow"]
    if not isinstance(task_summary, str) or not task_summary.strip():
        raise _ParseFailure('"task" must be a non-empty string')
    if not isinstance(raw_workflow, list):
        raise _ParseFailure('"workflow" must be a list')
    items = []
    for position, step in enumerate(raw_workflow):
        if isinstance(step, (list, tuple)) and len(step) == 2:
            kind_raw, content = step
        elif isinstance(step, dict) and "kind" in step and "content" in step:
            kind_raw, content = step["kind"], step["content"]
        else:
            raise _ParseFailure(f"workflow item {position} is not a [kind, content] pair")
        try:
            kind = WorkflowKind(str(kind_raw).strip().lower())
        except ValueError:
            raise _ParseFailure(
                f"workflow item {position} has unknown kind {kind_raw!r}"
            ) from None
        if not isinstance(content, str) or not content.strip():
            raise _ParseFailure(f"workflow item {position} has empty content")
        items.append(WorkflowItem(kind=kind, content=content))
    return task_summary, tuple(items)


def _parse_message_reply(text: str) -> str:
    try:
        document = json.loads(strip_code_fence(text))
    except json.JSONDecodeError as exc:
        raise _ParseFailure(f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise _ParseFailure("reply is not a JSON object")
    message = document.get("message")
    if not isinstance(message, str) or not message.strip():
        raise _ParseFailure('reply lacks a non-empty "message" field')
    return message


class TemplateEngine:
    """Builds templates from finished runs and adapts them on cache hits."""

    def __init__(self, gateway: Gateway):
        self._gateway = gateway

    # -- miss path: log -> trace -> template ---------------------------------

    def rule_filter(self, log: ExecutionLog) -> FilteredTrace:
        """Deterministically filter a log into a message/output/answer trace.

        No model calls: each round contributes its plan as a message and its
        actor response as an output; the final output becomes the terminal
        answer. Planner reasoning is dropped entirely.
        """
        if log.final_output is None:
            raise IncompleteLog("execution log has no final output")
        items: list[WorkflowItem] = []
        for plan, response in log.entries:
            items.append(WorkflowItem(WorkflowKind.MESSAGE, plan))
            items.append(WorkflowItem(WorkflowKind.OUTPUT, response))
        items.append(WorkflowItem(WorkflowKind.ANSWER, log.final_output))
        return tuple(items)

    def generalize(
        self,
        trace: FilteredTrace,
        keyword: str,
        *,
        task_query: str = "",
        task_context: str = "",
    ) -> PlanTemplate:
        """Ask the generator model to strip task specifics out of a trace.

        One retry on an unparseable reply (with the parse error appended);
        a parseable reply that breaks the workflow grammar or leaks the
        originating query/context fails immediately.
        """
        if not trace:
            raise ValueError("cannot generalize an empty trace")
        trace_document = {
            "task": task_query,
            "workflow": [[item.kind.value, item.content] for item in trace],
        }
        prompt = build_cache_generation_prompt(trace_document)
        exchange = self._gateway.complete(ModelRole.CACHE_GENERATOR, [user(prompt)])
        try:
            task_summary, items = _parse_template_reply(exchange.response_text)
        except _ParseFailure as first_error:
            retry_prompt = prompt + "\n" + PARSE_RETRY_INSTRUCTION.format(error=first_error)
            exchange = self._gateway.complete(ModelRole.CACHE_GENERATOR, [user(retry_prompt)])
            try:
                task_summary, items = _parse_template_reply(exchange.response_text)
            except _ParseFailure as second_error:
                raise MalformedGeneration(
                    f"generator reply unparseable after retry: {second_error}"
                ) from second_error
        if not validate_workflow(items):
            raise InvalidTemplate(
                f"generated workflow for keyword {keyword!r} violates the "
                "message/output/answer shape"
            )
        self._check_leakage(items, task_query, task_context, keyword)
        return PlanTemplate(task_summary=task_summary, workflow=items)

    @staticmethod
    def _check_leakage(
        items: Sequence[WorkflowItem], task_query: str, task_context: str, keyword: str
    ) -> None:
        context = task_context.strip()
        for item in items:
            if task_query and item.content == task_query:
                raise InvalidTemplate(
                    f"template for {keyword!r} repeats the raw task query verbatim"
                )
            if context and context in item.content:
                raise InvalidTemplate(
                    f"template for {keyword!r} contains the task context verbatim"
                )

    # -- hit path: cursor-wise adaptation ------------------------------------

    def adapt_step(
        self,
        template: PlanTemplate,
        task: TaskInstance,
        past_plans: Sequence[str],
        past_responses: Sequence[str],
    ) -> tuple[str | None, str | None]:
        """Produce the next task-specific plan, or the final answer.

        The template's message items sit at cursor positions 0..m-1 and its
        answer item at position m; the cursor is the number of completed
        rounds. Returns (plan, None) while messages remain, (None, answer)
        once they are exhausted.
        """
        messages = template.message_items
        outputs = template.output_items
        cursor = len(past_responses)
        if cursor > len(messages):
            raise TemplateExhausted(
                f"adaptation cursor {cursor} is past the template's {len(messages)} messages"
            )
        plans = list(past_plans)
        responses = list(past_responses)
        if cursor < len(messages):
            expected = outputs[cursor].content if cursor < len(outputs) else "(not recorded)"
            prompt = build_adaptation_prompt(
                cached_task=template.task_summary,
                reference_message=messages[cursor].content,
                expected_response=expected,
                task=task.query,
                past_plans=plans,
                past_responses=responses,
            )
            return self._adapted_message(prompt), None
        prompt = build_final_answer_prompt(
            cached_task=template.task_summary,
            reference_answer=template.answer_item.content,
            task=task.query,
            past_plans=plans,
            past_responses=responses,
        )
        return None, self._adapted_message(prompt)

    def _adapted_message(self, prompt: str) -> str:
        exchange = self._gateway.complete(ModelRole.SMALL_PLANNER, [user(prompt)])
        try:
            return _parse_message_reply(exchange.response_text)
        except _ParseFailure as first_error:
            retry_prompt = prompt + "\n" + PARSE_RETRY_INSTRUCTION.format(error=first_error)
            exchange = self._gateway.complete(ModelRole.SMALL_PLANNER, [user(retry_prompt)])
            try:
                return _parse_message_reply(exchange.response_text)
            except _ParseFailure as second_error:
                logger.info("adaptation reply unparseable after retry: %s", second_error)
                raise EscalationRequired(
                    f"adaptation reply unparseable after retry: {second_error}"
                ) from MalformedAdaptation(str(second_error))
