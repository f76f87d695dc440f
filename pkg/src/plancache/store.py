"""Exact-match keyword-indexed plan template store.

Lookups are exact string matches on normalized keywords, nothing fuzzier:
false-positive hits are excluded by construction. Persistence is a single
versioned JSON document so cached templates stay human-inspectable.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import InvalidTemplate, PersistenceError
from .keywords import normalize
from .model import CacheEntry, PlanTemplate, WorkflowItem, WorkflowKind, validate_workflow

SCHEMA_VERSION = 1


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    insertions: int = 0
    evictions: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "insertions": self.insertions,
            "evictions": self.evictions,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CacheStats":
        return cls(
            hits=int(data.get("hits", 0)),
            misses=int(data.get("misses", 0)),
            insertions=int(data.get("insertions", 0)),
            evictions=int(data.get("evictions", 0)),
        )


# --------------------------------------------------------------------------
# Template (de)serialization


def template_to_dict(template: PlanTemplate) -> dict[str, Any]:
    return {
        "task_summary": template.task_summary,
        "workflow": [
            {"kind": item.kind.value, "content": item.content} for item in template.workflow
        ],
    }


def template_from_dict(data: Mapping[str, Any]) -> PlanTemplate:
    items = tuple(
        WorkflowItem(kind=WorkflowKind(step["kind"]), content=step["content"])
        for step in data["workflow"]
    )
    return PlanTemplate(task_summary=data["task_summary"], workflow=items)


# --------------------------------------------------------------------------
# Versioned cache documents (shared with the baseline caches)


def write_cache_document(path: str | Path, document: Mapping[str, Any]) -> None:
    """Atomically write a cache document: temp file in place, then rename.

    A crash mid-write leaves the previous file intact; the temp file is
    cleaned up on failure.
    """
    path = Path(path)
    try:
        fd, tmp_name = tempfile.mkstemp(
            prefix=path.name + ".", suffix=".tmp", dir=path.parent or Path(".")
        )
    except OSError as exc:
        raise PersistenceError(f"cannot create temp file next to {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(document, handle, ensure_ascii=False, indent=2)
            handle.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def read_cache_document(path: str | Path, expected_payload_kind: str) -> dict[str, Any]:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot read cache file {path}: {exc}") from exc
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"cache file {path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise PersistenceError(f"cache file {path} does not hold a JSON object")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise PersistenceError(
            f"cache file {path} has schema_version {version!r}, expected {SCHEMA_VERSION}"
        )
    payload_kind = document.get("payload_kind", "template")
    if payload_kind != expected_payload_kind:
        raise PersistenceError(
            f"cache file {path} holds payload kind {payload_kind!r}, "
            f"expected {expected_payload_kind!r}"
        )
    return document


# --------------------------------------------------------------------------
# The plan cache


class PlanCache:
    """Keyword-indexed template cache with optional LRU capacity.

    Unbounded by default. Duplicate-key inserts are first-writer-wins no-ops,
    which makes concurrent misses on the same keyword benign. Sequence
    numbers (not wall clock) order entries for eviction and persistence.
    """

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.stats = CacheStats()
        self._entries: "OrderedDict[str, CacheEntry]" = OrderedDict()
        self._next_seq = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, keyword: str) -> bool:
        with self._lock:
            return normalize(keyword) in self._entries

    def keys(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(self._entries.keys())

    def entries(self) -> tuple[CacheEntry, ...]:
        with self._lock:
            return tuple(self._entries.values())

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def lookup(self, keyword: str) -> CacheEntry | None:
        """Exact-match lookup; bumps hit_count and recency on a hit."""
        key = normalize(keyword)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                self.stats.misses += 1
                return None
            updated = replace(entry, hit_count=entry.hit_count + 1, last_used=self._take_seq())
            self._entries[key] = updated
            self._entries.move_to_end(key)
            self.stats.hits += 1
            return updated

    def insert(self, keyword: str, template: PlanTemplate) -> None:
        """Store a template under a keyword; existing entries are kept as-is."""
        key = normalize(keyword)
        if not validate_workflow(template.workflow):
            raise InvalidTemplate(f"template for {key!r} fails workflow validation")
        with self._lock:
            if key in self._entries:
                return
            if self.capacity is not None and len(self._entries) >= self.capacity:
                evicted_key, _ = self._entries.popitem(last=False)
                self.stats.evictions += 1
            seq = self._take_seq()
            self._entries[key] = CacheEntry(
                keyword=key, template=template, created_at=seq, hit_count=0, last_used=seq
            )
            self.stats.insertions += 1

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with self._lock:
            document = {
                "schema_version": SCHEMA_VERSION,
                "entries": [
                    {
                        "keyword": entry.keyword,
                        "template": template_to_dict(entry.template),
                        "created_at": entry.created_at,
                        "hit_count": entry.hit_count,
                        "last_used": entry.last_used,
                    }
                    for entry in self._entries.values()
                ],
                "stats": self.stats.as_dict(),
                "next_seq": self._next_seq,
            }
        write_cache_document(path, document)

    @classmethod
    def load(cls, path: str | Path, capacity: int | None = None) -> "PlanCache":
        document = read_cache_document(path, expected_payload_kind="template")
        cache = cls(capacity=capacity)
        entries = document.get("entries")
        if not isinstance(entries, list):
            raise PersistenceError(f"cache file {path} has no entry list")
        loaded: list[CacheEntry] = []
        for record in entries:
            keyword = record.get("keyword", "<missing keyword>")
            try:
                template = template_from_dict(record["template"])
                entry = CacheEntry(
                    keyword=keyword,
                    template=template,
                    created_at=int(record["created_at"]),
                    hit_count=int(record["hit_count"]),
                    last_used=int(record["last_used"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise PersistenceError(
                    f"cache file {path}: entry for keyword {keyword!r} is invalid: {exc}"
                ) from exc
            loaded.append(entry)
        # Recency order is derivable from the persisted sequence numbers.
        for entry in sorted(loaded, key=lambda e: e.last_used):
            cache._entries[entry.keyword] = entry
        cache.stats = CacheStats.from_dict(document.get("stats", {}))
        cache._next_seq = int(document.get("next_seq", 0))
        return cache

    def deep_equal(self, other: "PlanCache") -> bool:
        return (
            self.keys() == other.keys()
            and self.entries() == other.entries()
            and self.stats == other.stats
            and self._next_seq == other._next_seq
        )
