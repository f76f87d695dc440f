"""Keyword extraction: maps a task query to the normalized cache key."""

from __future__ import annotations

import re

from .errors import EmptyKeyword
from .gateway import Gateway, ModelRole, user
from .prompts import build_keyword_prompt

_WHITESPACE = re.compile(r"\s+")


def normalize(raw: str) -> str:
    """Lowercase, trim, and collapse internal whitespace runs.

    Deliberately nothing more aggressive: fuzzier normalization would be
    similarity matching in disguise, and exact keyword equality is the whole
    point of the cache key.
    """
    collapsed = _WHITESPACE.sub(" ", raw.strip()).lower()
    if not collapsed:
        raise EmptyKeyword(f"keyword is empty after normalization: {raw!r}")
    return collapsed


class KeywordExtractor:
    """Asks a lightweight model for the higher-level intent of a query.

    Sees only the query, never the context: extraction must stay cheap and
    context-independent.
    """

    def __init__(self, gateway: Gateway):
        self._gateway = gateway

    def extract_keyword(self, query: str) -> str:
        if not query.strip():
            raise ValueError("query is empty")
        exchange = self._gateway.complete(
            ModelRole.KEYWORD_EXTRACTOR, [user(build_keyword_prompt(query))]
        )
        return normalize(exchange.response_text)
