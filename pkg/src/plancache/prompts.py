"""Prompt templates and prompt builders for every model role.

The planner/actor prompts define the JSON wire protocol the orchestrator
parses; keep the field names ("reasoning", "message", "answer") in sync with
the parsers in `orchestrator` and `templates`.
"""

from __future__ import annotations

import json


KEYWORD_EXTRACTION_PROMPT = (
    "Can you help me summarize what is the 'task' or 'keyword' describing the "
    "higher-level goal or intent of this query? Please answer only with the task / "
    "keyword, which must be independent from problem-specific details.\n"
    "{query}"
)

CACHE_GENERATION_PROMPT = (
    "You will see a filtered JSON trace that shows the complete workflow of how a "
    "planner language model solves a complex task by collaborating with an actor "
    "language model. Clean up the element of each item in the workflow, so that we "
    "can reuse this trace as a reference template (independent from problem-specific "
    "variables like company name or fiscal year) when we meet similar tasks later.\n"
    "Requirements:\n"
    '(1) the first element in each "workflow" item can only be "message", "output", '
    'or "answer",\n'
    "(2) the task and the workflow should not contain problem-specific details or "
    "numbers, and\n"
    "(3) return the result in JSON format that can be parsed by Python's "
    "json.loads().\n"
    "IMPORTANT: The workflow must maintain the sequence of "
    'message->loop(output->message/answer) to ensure proper functioning. Always '
    'start with a "message" and end with an "answer".\n'
    "JSON trace: {trace}"
)

CACHE_ADAPTATION_PROMPT = (
    "You are an intelligent language model that works with another model to solve "
    "complex tasks, like data-intensive reasoning questions.\n"
    "Please construct a follow-up action plan (in the form of a message) based on "
    "the task and the reference template.\n"
    "Reference task: {cached_task}\n"
    "Reference follow-up action plan (as a message): {reference_message}\n"
    "Expected actor response for that plan (from the reference): {expected_response}\n"
    "Your task is to adapt the reference follow-up message to the current context, "
    "maintaining the same inquiry structure but customizing it for the specific "
    "details of the current question and model output. Make sure the message asks "
    "for information not contained in past messages.\n"
    'Format your response as a JSON object with a "reasoning" field set to "N/A" '
    'and a "message" field containing your action plan message.\n'
    "Current task: {task}\n"
    "Past action plans (as messages): {past_messages}\n"
    "Past actor responses: {past_actor_responses}\n"
    "Current message:"
)

FINAL_ANSWER_ADAPTATION_PROMPT = (
    "You are an intelligent language model that works with another model to solve "
    "complex tasks, like data-intensive reasoning questions.\n"
    "The reference template below describes how this kind of task is concluded. "
    "Produce the final answer to the current task from the past actor responses, "
    "following the reference conclusion.\n"
    "Reference task: {cached_task}\n"
    "Reference conclusion (how the final answer is derived): {reference_answer}\n"
    'Format your response as a JSON object with a "reasoning" field set to "N/A" '
    'and a "message" field containing the final answer.\n'
    "Current task: {task}\n"
    "Past action plans (as messages): {past_messages}\n"
    "Past actor responses: {past_actor_responses}\n"
    "Current message:"
)

CORRECTNESS_JUDGE_PROMPT = (
    "You are a judge that grades numeric answers to data-intensive reasoning "
    "problems.\n"
    "This is the question: {task}.\n"
    "This is the reference answer: {gt_answer}.\n"
    "This is the answer given by a language model: {response}.\n"
    "Please grade it. Requirements:\n"
    "(1) Please allow minor deviations, such as\n"
    "    (i) giving the answer in billions when the unit was given in the question "
    "as millions.\n"
    "    (ii) giving the answer in percentage when the ground truth answer is "
    "floating point.\n"
    "    Please also allow small rounding errors or small numerical errors.\n"
    "(2) Incorrect answers vary, from calculations that are off by small margins to "
    "several orders of magnitude, and from making up legal information to giving "
    "the wrong direction for an effect (e.g. reporting negative growth when it is "
    "actually positive).\n"
    "(3) Just answer '1' for correct answers, or '0' for incorrect answers."
)

JUDGE_RETRY_SUFFIX = "\nReminder: answer with a single character, '1' or '0', and nothing else."

PLANNER_SYSTEM_PROMPT = (
    "You are the planner in a two-model workflow. You reason about a task and "
    "direct a separate actor model that holds the external context (documents, "
    "tables, environments). You never see that context yourself.\n"
    "Respond with a single JSON object, parseable by Python's json.loads(), in one "
    "of two forms:\n"
    '{"reasoning": "<your step-by-step thinking>", "message": "<instruction for '
    'the actor model>"}\n'
    "to request information from the actor, or\n"
    '{"reasoning": "<your step-by-step thinking>", "answer": "<final answer to '
    'the task>"}\n'
    'once you can answer the task. Include exactly one of "message" or "answer".'
)

BEST_EFFORT_FINAL_INSTRUCTION = (
    "The iteration limit has been reached. Give your best effort final answer now, "
    'as a JSON object with "reasoning" and "answer" fields.'
)

PARSE_RETRY_INSTRUCTION = (
    "Your previous reply could not be parsed ({error}). "
    "Reply again with exactly one valid JSON object and nothing else."
)

ACTOR_SYSTEM_PROMPT = (
    "You are the actor in a two-model workflow. You hold the external context for "
    "a task and answer the planner's requests using only that context. Be concise "
    "and factual."
)

IN_CONTEXT_EXAMPLE_HEADER = (
    "Here is the complete log of a previous execution of a similar task. Use it as "
    "a reference example:"
)


def build_planner_prompt(
    query: str,
    plans: list[str],
    responses: list[str],
    in_context_example: str | None = None,
) -> str:
    parts: list[str] = []
    if in_context_example:
        parts.append(IN_CONTEXT_EXAMPLE_HEADER)
        parts.append(in_context_example)
        parts.append("")
    parts.append(f"Task: {query}")
    for i, (plan, response) in enumerate(zip(plans, responses), start=1):
        parts.append(f"Plan (round {i}): {plan}")
        parts.append(f"Actor response (round {i}): {response}")
    parts.append("Respond with the next JSON object.")
    return "\n".join(parts)


def build_actor_prompt(query: str, context: str, plan: str) -> str:
    return (
        f"Task: {query}\n\n"
        f"Context:\n{context}\n\n"
        f"Request from the planner:\n{plan}"
    )


def build_keyword_prompt(query: str) -> str:
    return KEYWORD_EXTRACTION_PROMPT.format(query=query)


def build_cache_generation_prompt(trace_document: dict) -> str:
    return CACHE_GENERATION_PROMPT.format(trace=json.dumps(trace_document, ensure_ascii=False))


def build_adaptation_prompt(
    cached_task: str,
    reference_message: str,
    expected_response: str,
    task: str,
    past_plans: list[str],
    past_responses: list[str],
) -> str:
    return CACHE_ADAPTATION_PROMPT.format(
        cached_task=cached_task,
        reference_message=reference_message,
        expected_response=expected_response,
        task=task,
        past_messages=json.dumps(past_plans, ensure_ascii=False),
        past_actor_responses=json.dumps(past_responses, ensure_ascii=False),
    )


def build_final_answer_prompt(
    cached_task: str,
    reference_answer: str,
    task: str,
    past_plans: list[str],
    past_responses: list[str],
) -> str:
    return FINAL_ANSWER_ADAPTATION_PROMPT.format(
        cached_task=cached_task,
        reference_answer=reference_answer,
        task=task,
        past_messages=json.dumps(past_plans, ensure_ascii=False),
        past_actor_responses=json.dumps(past_responses, ensure_ascii=False),
    )


def build_judge_prompt(task: str, gt_answer: str, response: str) -> str:
    return CORRECTNESS_JUDGE_PROMPT.format(task=task, gt_answer=gt_answer, response=response)
