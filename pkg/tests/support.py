"""Scripted-workload builders shared across the test suite.

Everything here is deterministic: scripted replies, fixed token counts, and
fixed task texts, so transcripts and ledgers can be asserted exactly.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Sequence

from plancache import (
    CostLedger,
    Gateway,
    Orchestrator,
    OrchestratorConfig,
    PlanCache,
    ScriptedProvider,
    TaskInstance,
    scripted_gateway_from_doc,
)
from plancache.gateway import DEFAULT_PRICING


def planner_message(message: str, reasoning: str = "thinking it through") -> str:
    return json.dumps({"reasoning": reasoning, "message": message})


def planner_answer(answer: str, reasoning: str = "concluding") -> str:
    return json.dumps({"reasoning": reasoning, "answer": answer})


def adaptation_reply(message: str) -> str:
    return json.dumps({"reasoning": "N/A", "message": message})


def template_reply(task_summary: str, workflow: Sequence[tuple[str, str]]) -> str:
    return json.dumps(
        {"task": task_summary, "workflow": [[kind, content] for kind, content in workflow]}
    )


def build_scripted(
    scripts: Mapping[str, Sequence[Any]],
    *,
    with_ledger: bool = True,
) -> tuple[Gateway, ScriptedProvider, CostLedger | None]:
    ledger = CostLedger(DEFAULT_PRICING) if with_ledger else None
    gateway, provider = scripted_gateway_from_doc({"scripts": dict(scripts)}, ledger=ledger)
    return gateway, provider, ledger


def make_orchestrator(
    scripts: Mapping[str, Sequence[Any]],
    *,
    capacity: int | None = None,
    config: OrchestratorConfig | None = None,
    correctness_judge=None,
) -> tuple[Orchestrator, ScriptedProvider, CostLedger]:
    gateway, provider, ledger = build_scripted(scripts)
    cache = PlanCache(capacity=capacity)
    orchestrator = Orchestrator(
        gateway, cache, config=config, correctness_judge=correctness_judge
    )
    return orchestrator, provider, ledger


def merge_scripts(*bundles: Mapping[str, Sequence[Any]]) -> dict[str, list[Any]]:
    merged: dict[str, list[Any]] = {}
    for bundle in bundles:
        for role, replies in bundle.items():
            merged.setdefault(role, []).extend(replies)
    return merged


# ---------------------------------------------------------------------------
# Canonical one-round scenario bundles


def _sized(text: str, input_tokens: int, output_tokens: int) -> dict[str, Any]:
    return {"text": text, "input_tokens": input_tokens, "output_tokens": output_tokens}


def miss_bundle(
    keyword: str,
    plan: str,
    actor_response: str,
    answer: str,
    template_summary: str,
    template_workflow: Sequence[tuple[str, str]],
    *,
    reasoning: str = "work out which figures are needed, then combine them",
) -> dict[str, list[Any]]:
    """Scripts for one single-round miss: plan, act, answer, generalize.

    Replies carry modest fixed token counts so ledgers are non-trivial.
    """
    return {
        "keyword_extractor": [_sized(keyword, 120, 8)],
        "large_planner": [
            _sized(planner_message(plan, reasoning), 900, 180),
            _sized(planner_answer(answer, reasoning), 1_100, 200),
        ],
        "actor": [_sized(actor_response, 2_400, 120)],
        "cache_generator": [
            _sized(template_reply(template_summary, template_workflow), 700, 220)
        ],
    }


def hit_bundle(
    keyword: str,
    adapted_plan: str,
    actor_response: str,
    final_answer: str,
) -> dict[str, list[Any]]:
    """Scripts for one single-round hit against a one-message template."""
    return {
        "keyword_extractor": [_sized(keyword, 120, 8)],
        "small_planner": [
            _sized(adaptation_reply(adapted_plan), 350, 90),
            _sized(adaptation_reply(final_answer), 500, 110),
        ],
        "actor": [_sized(actor_response, 2_400, 120)],
    }


# ---------------------------------------------------------------------------
# The working-capital golden replay (miss on Costco, hit on Best Buy)

COSTCO_QUERY = (
    "What is FY2019 working capital ratio for Costco? Define working capital ratio "
    "as total current assets divided by total current liabilities. Round your answer "
    "to two decimal places. Give a response to the question by relying on the details "
    "shown in the statement of financial position."
)

COSTCO_CONTEXT = (
    "COSTCO WHOLESALE CORPORATION\n"
    "CONSOLIDATED BALANCE SHEETS (amounts in millions)\n"
    "September 1, 2019\n"
    "Total current assets: $23,485\n"
    "Total current liabilities: $23,237\n"
    "Total assets: $45,400\n"
)

BESTBUY_QUERY = (
    "What is FY2021 working capital ratio for Best Buy? Define working capital ratio "
    "as total current assets divided by total current liabilities. Round your answer "
    "to two decimal places. Please base your judgments on the information provided "
    "primarily in the statement of financial position."
)

BESTBUY_CONTEXT = (
    "BEST BUY CO., INC.\n"
    "CONSOLIDATED BALANCE SHEETS (amounts in millions)\n"
    "January 30, 2021\n"
    "Total current assets: $12,540\n"
    "Total current liabilities: $10,521\n"
    "Total assets: $19,067\n"
)

WORKING_CAPITAL_KEYWORD = "working capital ratio"

COSTCO_REASONING_ROUND1 = (
    "1. Decompose the task: the question asks for the working capital ratio for "
    "Costco for FY2019, which requires two figures from the statement of financial "
    "position: total current assets and total current liabilities. "
    "2. Explain each component: total current assets represent the resources the "
    "company can convert to cash within a year, and knowing this figure is essential "
    "because it forms the numerator of the ratio; total current liabilities represent "
    "the obligations due within a year and form the denominator, so both are required "
    "before any computation can happen. "
    "3. Formulate a focused message: the next step is to ask the actor model, which "
    "holds the financial document, for those two specific figures for FY2019. "
    "4. Conclude with a final answer: once both figures are available, divide total "
    "current assets by total current liabilities and round the result to two decimal "
    "places to produce the requested ratio."
)

COSTCO_REASONING_ROUND2 = (
    "1. What information we have gathered: the actor reports total current assets of "
    "$23,485 million and total current liabilities of $23,237 million as of "
    "September 1, 2019. "
    "2. Whether it is sufficient: yes, both the numerator and the denominator of the "
    "working capital ratio are now available, so no further requests are needed. "
    "3. What is missing: nothing, the statement of financial position provided both "
    "figures directly. "
    "4. How to derive the answer: divide total current assets by total current "
    "liabilities, 23,485 / 23,237, which is approximately 1.0107, and rounding to "
    "two decimal places gives 1.01."
)

COSTCO_PLAN = (
    "Please provide the total current assets and total current liabilities for "
    "Costco for FY2019 from the statement of financial position."
)

COSTCO_ACTOR_RESPONSE = (
    "Based on the provided statement of financial position for Costco Wholesale "
    "Corporation as of September 1, 2019: Total current assets: $23,485 million. "
    "Total current liabilities: $23,237 million."
)

COSTCO_ANSWER = "The working capital ratio for Costco for FY2019 is 1.01."

WORKING_CAPITAL_TEMPLATE_SUMMARY = (
    "Calculate the working capital ratio for a company for a given fiscal year "
    "using its statement of financial position."
)

WORKING_CAPITAL_TEMPLATE_WORKFLOW = [
    (
        "message",
        "Please provide the total current assets and total current liabilities "
        "from the statement of financial position.",
    ),
    ("output", "Total current assets and total current liabilities figures."),
    (
        "answer",
        "Compute the working capital ratio as total current assets divided by "
        "total current liabilities and round to two decimal places.",
    ),
]

BESTBUY_ADAPTED_PLAN = (
    "Please provide the total current assets and total current liabilities for "
    "Best Buy in FY2021 from the statement of financial position, so I can "
    "calculate the working capital ratio."
)

BESTBUY_ACTOR_RESPONSE = (
    "According to the Consolidated Balance Sheets, the total current assets for "
    "Best Buy in FY2021 are $12,540 million, and the total current liabilities "
    "are $10,521 million."
)

BESTBUY_ANSWER = (
    "The FY2021 working capital ratio for Best Buy is calculated by dividing total "
    "current assets by total current liabilities: $12,540 million / $10,521 million "
    "= 1.19. Therefore, the working capital ratio is 1.19, rounded to two decimal "
    "places."
)


def working_capital_tasks() -> tuple[TaskInstance, TaskInstance]:
    costco = TaskInstance(
        id="wc-costco-fy2019",
        query=COSTCO_QUERY,
        context=COSTCO_CONTEXT,
        ground_truth="1.01",
    )
    bestbuy = TaskInstance(
        id="wc-bestbuy-fy2021",
        query=BESTBUY_QUERY,
        context=BESTBUY_CONTEXT,
        ground_truth="1.19",
    )
    return costco, bestbuy


def working_capital_plan_cache_scripts() -> dict[str, list[Any]]:
    """Scripts for the two-task replay under plan caching."""
    return merge_scripts(
        {
            "keyword_extractor": [WORKING_CAPITAL_KEYWORD],
            "large_planner": [
                planner_message(COSTCO_PLAN, COSTCO_REASONING_ROUND1),
                planner_answer(COSTCO_ANSWER, COSTCO_REASONING_ROUND2),
            ],
            "actor": [COSTCO_ACTOR_RESPONSE],
            "cache_generator": [
                template_reply(WORKING_CAPITAL_TEMPLATE_SUMMARY, WORKING_CAPITAL_TEMPLATE_WORKFLOW)
            ],
        },
        hit_bundle(
            WORKING_CAPITAL_KEYWORD,
            BESTBUY_ADAPTED_PLAN,
            BESTBUY_ACTOR_RESPONSE,
            BESTBUY_ANSWER,
        ),
    )


def working_capital_full_history_scripts() -> dict[str, list[Any]]:
    """Scripts for the same two tasks under full-history caching."""
    return {
        "keyword_extractor": [WORKING_CAPITAL_KEYWORD, WORKING_CAPITAL_KEYWORD],
        "large_planner": [
            planner_message(COSTCO_PLAN, COSTCO_REASONING_ROUND1),
            planner_answer(COSTCO_ANSWER, COSTCO_REASONING_ROUND2),
        ],
        "small_planner": [
            planner_message(BESTBUY_ADAPTED_PLAN, "N/A"),
            planner_answer(BESTBUY_ANSWER, "N/A"),
        ],
        "actor": [COSTCO_ACTOR_RESPONSE, BESTBUY_ACTOR_RESPONSE],
    }


# ---------------------------------------------------------------------------
# Synthetic counting workload: N keyword classes, M tasks per class


def synthetic_workload(
    n_classes: int = 5,
    tasks_per_class: int = 4,
    *,
    with_ground_truth: bool = False,
) -> tuple[list[TaskInstance], dict[str, list[Any]]]:
    """Build tasks plus scripts so the first task of each class misses.

    Task order interleaves the classes (task i belongs to class i mod
    n_classes), so exactly the first n_classes tasks miss and every later
    task hits.
    """
    tasks: list[TaskInstance] = []
    bundles: list[Mapping[str, Sequence[Any]]] = []
    total = n_classes * tasks_per_class
    seen: set[int] = set()
    for i in range(total):
        cls = i % n_classes
        keyword = f"metric {cls} calculation"
        query = f"Compute metric {cls} for company {i} from its report."
        context = f"Report for company {i}: metric {cls} inputs are {100 + i} and {50 + i}."
        tasks.append(
            TaskInstance(
                id=f"synth-{i}",
                query=query,
                context=context,
                ground_truth=f"answer-{i}" if with_ground_truth else None,
            )
        )
        if cls not in seen:
            seen.add(cls)
            bundles.append(
                miss_bundle(
                    keyword,
                    plan=f"Please provide the inputs for metric {cls}.",
                    actor_response=f"The inputs are {100 + i} and {50 + i}.",
                    answer=f"answer-{i}",
                    template_summary=f"Compute metric {cls} for a company from its report.",
                    template_workflow=[
                        ("message", f"Please provide the inputs for metric {cls}."),
                        ("output", "The two input figures."),
                        ("answer", f"Combine the inputs to produce metric {cls}."),
                    ],
                )
            )
        else:
            bundles.append(
                hit_bundle(
                    keyword,
                    adapted_plan=f"Please provide the inputs for metric {cls} for company {i}.",
                    actor_response=f"The inputs are {100 + i} and {50 + i}.",
                    final_answer=f"answer-{i}",
                )
            )
        if with_ground_truth:
            bundles.append({"judge": ["1"]})
    return tasks, merge_scripts(*bundles)


# ---------------------------------------------------------------------------
# Worst-case overhead workload: every task misses, token scripts sized so the
# cost mix matches an all-miss serving profile (heavy planner, light cache
# machinery).


def all_miss_overhead_workload(
    n_tasks: int = 8,
) -> tuple[list[TaskInstance], dict[str, list[Any]]]:
    tasks: list[TaskInstance] = []
    bundles: list[Mapping[str, Sequence[Any]]] = []
    for i in range(n_tasks):
        tasks.append(
            TaskInstance(
                id=f"miss-{i}",
                query=f"Compute quantity {i} from document {i}.",
                context=f"Document {i} with figures.",
            )
        )
        keyword = f"quantity {i} calculation"
        bundles.append(
            {
                "keyword_extractor": [
                    {"text": keyword, "input_tokens": 2600, "output_tokens": 170}
                ],
                "large_planner": [
                    {
                        "text": planner_message(f"Please provide the figures for quantity {i}."),
                        "input_tokens": 70_000,
                        "output_tokens": 2_100,
                    },
                    {
                        "text": planner_answer(f"Quantity {i} equals {i * 7}."),
                        "input_tokens": 70_000,
                        "output_tokens": 2_100,
                    },
                ],
                "actor": [
                    {
                        "text": f"The figures for quantity {i} are available.",
                        "input_tokens": 25_000,
                        "output_tokens": 4_000,
                    }
                ],
                "cache_generator": [
                    {
                        "text": template_reply(
                            f"Compute quantity {i} from a document.",
                            [
                                ("message", f"Please provide the figures for quantity {i}."),
                                ("output", "The relevant figures."),
                                ("answer", f"Combine the figures to produce quantity {i}."),
                            ],
                        ),
                        "input_tokens": 9_000,
                        "output_tokens": 6_000,
                    }
                ],
            }
        )
    return tasks, merge_scripts(*bundles)


def prompt_word_count(gateway: Gateway, run_id: str) -> int:
    """Whitespace token count over all prompts issued within one run."""
    return sum(
        len(entry.exchange.prompt_text.split())
        for entry in gateway.transcript
        if entry.run_id == run_id
    )


def distinct_runs(ledger: CostLedger, component_value: str) -> set[str]:
    return {row.run_id for row in ledger.rows if row.component.value == component_value}
