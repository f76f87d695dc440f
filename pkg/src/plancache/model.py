"""Shared data model: tasks, workflow steps, plan templates, execution logs.

Everything here is an immutable value object; ordering and mutation live in
the stores and the orchestrator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class WorkflowKind(str, Enum):
    MESSAGE = "message"
    OUTPUT = "output"
    ANSWER = "answer"


@dataclass(frozen=True)
class TaskInstance:
    """One agent request: a query plus the external context only the actor sees."""

    id: str
    query: str
    context: str = ""
    ground_truth: str | None = None

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise ValueError(f"task {self.id!r}: query is empty")


@dataclass(frozen=True)
class WorkflowItem:
    """A single typed step of a plan template."""

    kind: WorkflowKind
    content: str

    def __post_init__(self) -> None:
        if not isinstance(self.kind, WorkflowKind):
            raise ValueError(f"unknown workflow kind: {self.kind!r}")
        if not self.content:
            raise ValueError("workflow item content is empty")


def validate_workflow(items: Sequence[WorkflowItem]) -> bool:
    """Check that a step sequence forms a runnable workflow.

    Accepts exactly the shape: a message, zero or more (output, message)
    pairs, a final output, then a single terminal answer. Equivalently: the
    sequence starts with a message, ends with an answer, every message or
    answer after the first step follows an output, and every output follows
    a message.
    """
    if not items:
        return False
    kinds = [item.kind for item in items]
    if kinds[0] is not WorkflowKind.MESSAGE:
        return False
    if kinds[-1] is not WorkflowKind.ANSWER:
        return False
    for prev, cur in zip(kinds, kinds[1:]):
        if cur is WorkflowKind.OUTPUT:
            if prev is not WorkflowKind.MESSAGE:
                return False
        else:  # message or answer
            if prev is not WorkflowKind.OUTPUT:
                return False
    return kinds.count(WorkflowKind.ANSWER) == 1


@dataclass(frozen=True)
class PlanTemplate:
    """Generalized, context-free workflow distilled from a successful run."""

    task_summary: str
    workflow: tuple[WorkflowItem, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "workflow", tuple(self.workflow))
        if not validate_workflow(self.workflow):
            raise ValueError("template workflow violates the message/output/answer shape")

    @property
    def message_items(self) -> tuple[WorkflowItem, ...]:
        return tuple(i for i in self.workflow if i.kind is WorkflowKind.MESSAGE)

    @property
    def output_items(self) -> tuple[WorkflowItem, ...]:
        return tuple(i for i in self.workflow if i.kind is WorkflowKind.OUTPUT)

    @property
    def answer_item(self) -> WorkflowItem:
        return self.workflow[-1]


@dataclass(frozen=True)
class ExecutionLog:
    """Ordered record of one agent run.

    ``entries`` holds (plan, actor response) pairs, one per completed round.
    ``planner_reasoning`` keeps the verbose per-round reasoning separately so
    the rule-based filter can drop it without any text surgery.
    """

    entries: tuple[tuple[str, str], ...] = ()
    planner_reasoning: tuple[str, ...] = ()
    final_output: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))
        object.__setattr__(self, "planner_reasoning", tuple(self.planner_reasoning))

    @property
    def iterations_used(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CacheEntry:
    """A (keyword, template) cache record plus usage metadata.

    ``created_at`` and ``last_used`` are monotonic sequence numbers handed
    out by the store, not wall-clock times, so replays are deterministic.
    """

    keyword: str
    template: PlanTemplate
    created_at: int
    hit_count: int = 0
    last_used: int = 0
