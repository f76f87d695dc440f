"""Keyword normalization and extraction."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from plancache import EmptyKeyword, KeywordExtractor, ModelRole, normalize

from support import build_scripted


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("Working Capital Ratio", "working capital ratio"),
        ("mean\t calculation", "mean calculation"),
        ("  Mean   Calculation ", "mean calculation"),
        ("already normal", "already normal"),
        ("UPPER", "upper"),
        ("a\n\nb", "a b"),
    ],
)
def test_normalize(raw, expected):
    assert normalize(raw) == expected


@pytest.mark.parametrize("raw", ["", "   ", "\t\n "])
def test_normalize_rejects_blank(raw):
    with pytest.raises(EmptyKeyword):
        normalize(raw)


@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_normalize_is_idempotent(raw):
    once = normalize(raw)
    assert normalize(once) == once


@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_normalized_keywords_satisfy_invariants(raw):
    keyword = normalize(raw)
    assert keyword == keyword.lower()
    assert keyword == keyword.strip()
    assert "  " not in keyword and "\t" not in keyword and "\n" not in keyword


def test_extract_keyword_normalizes_model_reply():
    gateway, provider, _ = build_scripted(
        {"keyword_extractor": ["  Mean   Calculation "]}
    )
    extractor = KeywordExtractor(gateway)
    assert extractor.extract_keyword("compute the average of all numbers") == "mean calculation"
    assert provider.calls(ModelRole.KEYWORD_EXTRACTOR) == 1


def test_extract_keyword_passes_only_the_query():
    gateway, _, _ = build_scripted({"keyword_extractor": ["working capital ratio"]})
    extractor = KeywordExtractor(gateway)
    extractor.extract_keyword("What is FY2019 working capital ratio for Costco?")
    prompt = gateway.transcript[-1].exchange.prompt_text
    assert "What is FY2019 working capital ratio for Costco?" in prompt
    assert "higher-level goal or intent" in prompt


def test_extract_keyword_blank_reply_is_empty_keyword():
    gateway, _, _ = build_scripted({"keyword_extractor": ["   "]})
    extractor = KeywordExtractor(gateway)
    with pytest.raises(EmptyKeyword):
        extractor.extract_keyword("anything at all")


def test_extract_keyword_rejects_empty_query():
    gateway, _, _ = build_scripted({"keyword_extractor": []})
    extractor = KeywordExtractor(gateway)
    with pytest.raises(ValueError):
        extractor.extract_keyword("  ")
