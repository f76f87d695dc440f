"""Uniform chat-completion gateway over HTTP providers and a scripted fake.

The gateway routes a model role (large planner, actor, judge, ...) to a bound
model and provider, captures token usage for every call, and, when a cost
ledger is attached, attributes each call to the active run.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import logging
import math
import os
import re
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Any, Callable, Iterator, Mapping, Sequence

import requests

from .errors import ConfigError, ProviderError, ScriptExhausted, UnknownPricing

logger = logging.getLogger(__name__)

_MILLION = Decimal(1_000_000)


class Speaker(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    speaker: Speaker
    text: str


def system(text: str) -> ChatMessage:
    return ChatMessage(Speaker.SYSTEM, text)


def user(text: str) -> ChatMessage:
    return ChatMessage(Speaker.USER, text)


def assistant(text: str) -> ChatMessage:
    return ChatMessage(Speaker.ASSISTANT, text)


class ModelRole(str, Enum):
    LARGE_PLANNER = "large_planner"
    SMALL_PLANNER = "small_planner"
    ACTOR = "actor"
    KEYWORD_EXTRACTOR = "keyword_extractor"
    CACHE_GENERATOR = "cache_generator"
    JUDGE = "judge"
    EMBEDDER = "embedder"


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class ModelPricing:
    model_id: str
    usd_per_million_input: Decimal
    usd_per_million_output: Decimal

    def __post_init__(self) -> None:
        if self.usd_per_million_input < 0 or self.usd_per_million_output < 0:
            raise ValueError(f"negative price for {self.model_id}")


def cost_of(usage: TokenUsage, pricing: ModelPricing) -> Decimal:
    """Dollar cost of a call, in exact decimal arithmetic."""
    return (
        usage.input_tokens * pricing.usd_per_million_input
        + usage.output_tokens * pricing.usd_per_million_output
    ) / _MILLION


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    max_output_tokens: int = 4096


DEFAULT_GENERATION = GenerationConfig()


@dataclass(frozen=True)
class ChatExchange:
    """One completed model call: prompt in, text and usage out."""

    role: ModelRole
    model_id: str
    prompt_messages: tuple[ChatMessage, ...]
    response_text: str
    usage: TokenUsage
    retries: int = 0

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.text for m in self.prompt_messages)


class PricingTable:
    """Model-id keyed price list; prices are decimals, not binary floats."""

    def __init__(self, prices: Mapping[str, ModelPricing] | None = None):
        self._prices: dict[str, ModelPricing] = dict(prices or {})

    @classmethod
    def from_entries(cls, entries: Mapping[str, Mapping[str, Any]]) -> "PricingTable":
        prices = {}
        for model_id, row in entries.items():
            prices[model_id] = ModelPricing(
                model_id=model_id,
                usd_per_million_input=_as_decimal(row["input"]),
                usd_per_million_output=_as_decimal(row["output"]),
            )
        return cls(prices)

    def get(self, model_id: str) -> ModelPricing:
        try:
            return self._prices[model_id]
        except KeyError:
            raise UnknownPricing(f"no pricing configured for model {model_id!r}") from None

    def with_overrides(self, entries: Mapping[str, Mapping[str, Any]]) -> "PricingTable":
        merged = dict(self._prices)
        merged.update(PricingTable.from_entries(entries)._prices)
        return PricingTable(merged)

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._prices


def _as_decimal(value: Any) -> Decimal:
    if isinstance(value, Decimal):
        return value
    return Decimal(str(value))


# Per-million-token API prices for the models this project is normally run
# against. Override or extend via the provider config file.
DEFAULT_PRICING = PricingTable.from_entries(
    {
        "gpt-4o": {"input": "2.50", "output": "10.00"},
        "gpt-4o-mini": {"input": "0.15", "output": "0.60"},
        "claude-3-5-sonnet-20240620": {"input": "3.00", "output": "15.00"},
        "Meta-Llama-3.1-8B-Instruct-Turbo": {"input": "0.18", "output": "0.18"},
        "Llama-3.2-3B-Instruct-Turbo": {"input": "0.06", "output": "0.06"},
        "Qwen2.5-7B-Instruct-Turbo": {"input": "0.30", "output": "0.30"},
    }
)


# --------------------------------------------------------------------------
# Providers


@dataclass(frozen=True)
class ScriptedReply:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0

    @property
    def usage(self) -> TokenUsage:
        return TokenUsage(self.input_tokens, self.output_tokens)


def _coerce_reply(raw: Any) -> ScriptedReply:
    if isinstance(raw, ScriptedReply):
        return raw
    if isinstance(raw, str):
        return ScriptedReply(text=raw)
    if isinstance(raw, Mapping):
        return ScriptedReply(
            text=str(raw["text"]),
            input_tokens=int(raw.get("input_tokens", 0)),
            output_tokens=int(raw.get("output_tokens", 0)),
        )
    raise ConfigError(f"cannot interpret scripted reply: {raw!r}")


class ScriptedProvider:
    """Deterministic provider that plays back per-role response scripts.

    Token counts come from the script, never from tokenizing text, so tests
    can pin exact cost arithmetic. Script consumption is serialized per role.
    """

    def __init__(self, scripts: Mapping[ModelRole | str, Sequence[Any]]):
        self._scripts: dict[ModelRole, list[ScriptedReply]] = {}
        self._cursor: dict[ModelRole, int] = defaultdict(int)
        self._locks: dict[ModelRole, threading.Lock] = defaultdict(threading.Lock)
        for role_key, replies in scripts.items():
            role = ModelRole(role_key)
            self._scripts[role] = [_coerce_reply(r) for r in replies]

    def complete(
        self,
        role: ModelRole,
        model_id: str,
        messages: Sequence[ChatMessage],
        config: GenerationConfig,
    ) -> tuple[str, TokenUsage, int]:
        with self._locks[role]:
            script = self._scripts.get(role, [])
            index = self._cursor[role]
            if index >= len(script):
                raise ScriptExhausted(
                    f"scripted provider has no response left for role "
                    f"{role.value!r} (call #{index + 1})"
                )
            self._cursor[role] = index + 1
        reply = script[index]
        return reply.text, reply.usage, 0

    def calls(self, role: ModelRole) -> int:
        return self._cursor[role]

    def remaining(self, role: ModelRole) -> int:
        return len(self._scripts.get(role, [])) - self._cursor[role]


# Transport signature: (url, headers, json_body, timeout) -> (status, parsed body).
Transport = Callable[[str, dict, dict, float], tuple[int, Any]]


def _requests_transport(url: str, headers: dict, body: dict, timeout: float) -> tuple[int, Any]:
    response = requests.post(url, headers=headers, json=body, timeout=timeout)
    try:
        payload = response.json()
    except ValueError:
        payload = {"raw": response.text}
    return response.status_code, payload


class HttpChatProvider:
    """OpenAI-compatible chat-completions client with bounded retry.

    Retries transport failures and 5xx up to ``max_attempts`` with exponential
    backoff; 4xx responses fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._api_key = api_key
        self._timeout = timeout
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._transport = transport or _requests_transport
        self._sleep = sleep

    def complete(
        self,
        role: ModelRole,
        model_id: str,
        messages: Sequence[ChatMessage],
        config: GenerationConfig,
    ) -> tuple[str, TokenUsage, int]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body = {
            "model": model_id,
            "messages": [{"role": m.speaker.value, "content": m.text} for m in messages],
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        last_error: str = "no attempt made"
        for attempt in range(self._max_attempts):
            if attempt:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                status, payload = self._transport(self._url, headers, body, self._timeout)
            except Exception as exc:  # transport-level failure is transient
                last_error = f"transport failure: {exc}"
                logger.warning("chat call to %s failed (attempt %d): %s", self._url, attempt + 1, exc)
                continue
            if 400 <= status < 500:
                raise ProviderError(f"HTTP {status} from {self._url}: {_short(payload)}")
            if status >= 500:
                last_error = f"HTTP {status}: {_short(payload)}"
                logger.warning("chat call to %s got %d (attempt %d)", self._url, status, attempt + 1)
                continue
            try:
                text = payload["choices"][0]["message"]["content"]
                usage_raw = payload.get("usage", {})
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed completion payload: {exc}") from exc
            if not text:
                raise ProviderError(f"empty completion from model {model_id!r}")
            usage = TokenUsage(
                int(usage_raw.get("prompt_tokens", 0)),
                int(usage_raw.get("completion_tokens", 0)),
            )
            return text, usage, attempt
        raise ProviderError(
            f"chat call to {self._url} failed after {self._max_attempts} attempts: {last_error}"
        )


class HttpEmbeddingProvider:
    """OpenAI-compatible embeddings client; same retry policy as chat."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._url = base_url.rstrip("/") + "/embeddings"
        self._api_key = api_key
        self._timeout = timeout
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._transport = transport or _requests_transport
        self._sleep = sleep

    def embed(self, model_id: str, text: str) -> tuple[list[float], TokenUsage]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body = {"model": model_id, "input": text}
        last_error = "no attempt made"
        for attempt in range(self._max_attempts):
            if attempt:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                status, payload = self._transport(self._url, headers, body, self._timeout)
            except Exception as exc:
                last_error = f"transport failure: {exc}"
                continue
            if 400 <= status < 500:
                raise ProviderError(f"HTTP {status} from {self._url}: {_short(payload)}")
            if status >= 500:
                last_error = f"HTTP {status}: {_short(payload)}"
                continue
            try:
                vector = [float(x) for x in payload["data"][0]["embedding"]]
                usage_raw = payload.get("usage", {})
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed embedding payload: {exc}") from exc
            usage = TokenUsage(int(usage_raw.get("prompt_tokens", 0)), 0)
            return vector, usage
        raise ProviderError(
            f"embedding call to {self._url} failed after {self._max_attempts} attempts: {last_error}"
        )


def _short(payload: Any, limit: int = 200) -> str:
    text = json.dumps(payload, default=str) if not isinstance(payload, str) else payload
    return text if len(text) <= limit else text[:limit] + "..."


# --------------------------------------------------------------------------
# Embeddings

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def bag_of_words(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for token in _TOKEN_RE.findall(text.lower()):
        counts[token] = counts.get(token, 0) + 1
    return counts


class OfflineEmbedder:
    """Deterministic term-frequency embedder over lowercased alphanumeric tokens.

    Identical texts embed identically; no network, no cost. Quality is
    irrelevant here, determinism is the point.
    """

    model_id = "offline-tf"

    def embed(self, text: str) -> dict[str, float]:
        counts = bag_of_words(text)
        norm = math.sqrt(sum(c * c for c in counts.values()))
        if norm == 0.0:
            return {}
        return {token: count / norm for token, count in counts.items()}


def cosine(a: Any, b: Any) -> float:
    """Cosine similarity between two embeddings (sparse dicts or dense lists).

    Equal vectors short-circuit to exactly 1.0 so threshold-1.0 comparisons
    are not at the mercy of float rounding.
    """
    if isinstance(a, Mapping) != isinstance(b, Mapping):
        raise TypeError("cannot compare sparse and dense embeddings")
    if isinstance(a, Mapping):
        if not a or not b:
            return 0.0
        if a == b:
            return 1.0
        dot = math.fsum(weight * b[token] for token, weight in a.items() if token in b)
        norm_a = math.sqrt(math.fsum(w * w for w in a.values()))
        norm_b = math.sqrt(math.fsum(w * w for w in b.values()))
    else:
        if list(a) == list(b):
            return 1.0
        dot = math.fsum(x * y for x, y in zip(a, b))
        norm_a = math.sqrt(math.fsum(x * x for x in a))
        norm_b = math.sqrt(math.fsum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


# --------------------------------------------------------------------------
# Gateway

_ACTIVE_RUN: contextvars.ContextVar[str | None] = contextvars.ContextVar(
    "plancache_active_run", default=None
)


@dataclass(frozen=True)
class RoleBinding:
    model_id: str
    provider: Any  # anything with provider.complete(role, model_id, messages, config)


@dataclass(frozen=True)
class EmbedderBinding:
    model_id: str
    provider: HttpEmbeddingProvider


@dataclass(frozen=True)
class TranscriptEntry:
    run_id: str | None
    exchange: ChatExchange


class Gateway:
    """Routes roles to bound models, records transcripts and ledger rows."""

    def __init__(
        self,
        bindings: Mapping[ModelRole, RoleBinding],
        *,
        ledger: Any = None,
        embedder: OfflineEmbedder | None = None,
        remote_embedder: EmbedderBinding | None = None,
    ):
        self._bindings = dict(bindings)
        self._ledger = ledger
        self._embedder = embedder or OfflineEmbedder()
        self._remote_embedder = remote_embedder
        self.transcript: list[TranscriptEntry] = []

    @property
    def ledger(self) -> Any:
        return self._ledger

    @property
    def active_run_id(self) -> str | None:
        return _ACTIVE_RUN.get()

    @contextlib.contextmanager
    def run_scope(self, run_id: str) -> Iterator[str]:
        token = _ACTIVE_RUN.set(run_id)
        try:
            yield run_id
        finally:
            _ACTIVE_RUN.reset(token)

    def complete(
        self,
        role: ModelRole,
        messages: Sequence[ChatMessage],
        config: GenerationConfig | None = None,
    ) -> ChatExchange:
        binding = self._bindings.get(role)
        if binding is None:
            raise ConfigError(f"no model bound for role {role.value!r}")
        text, usage, retries = binding.provider.complete(
            role, binding.model_id, tuple(messages), config or DEFAULT_GENERATION
        )
        exchange = ChatExchange(
            role=role,
            model_id=binding.model_id,
            prompt_messages=tuple(messages),
            response_text=text,
            usage=usage,
            retries=retries,
        )
        run_id = self.active_run_id
        self.transcript.append(TranscriptEntry(run_id, exchange))
        if self._ledger is not None:
            self._ledger.record_exchange(role, exchange, run_id=run_id or "")
        return exchange

    def embed(self, text: str) -> Any:
        """Embed text; offline TF vectors by default, remote when bound."""
        if not text.strip():
            raise ValueError("cannot embed empty text")
        if self._remote_embedder is None:
            return self._embedder.embed(text)
        vector, usage = self._remote_embedder.provider.embed(
            self._remote_embedder.model_id, text
        )
        exchange = ChatExchange(
            role=ModelRole.EMBEDDER,
            model_id=self._remote_embedder.model_id,
            prompt_messages=(user(text),),
            response_text="<embedding>",
            usage=usage,
        )
        run_id = self.active_run_id
        self.transcript.append(TranscriptEntry(run_id, exchange))
        if self._ledger is not None:
            self._ledger.record_exchange(ModelRole.EMBEDDER, exchange, run_id=run_id or "")
        return vector

    def provider_for(self, role: ModelRole) -> Any:
        binding = self._bindings.get(role)
        return binding.provider if binding else None


# --------------------------------------------------------------------------
# Gateway assembly from config documents

# Default model ids used when a scripted run does not name its own. Chosen so
# scripted token counts price out against the default pricing table.
DEFAULT_SCRIPTED_MODELS: dict[ModelRole, str] = {
    ModelRole.LARGE_PLANNER: "gpt-4o",
    ModelRole.SMALL_PLANNER: "Meta-Llama-3.1-8B-Instruct-Turbo",
    ModelRole.ACTOR: "Meta-Llama-3.1-8B-Instruct-Turbo",
    ModelRole.KEYWORD_EXTRACTOR: "gpt-4o-mini",
    ModelRole.CACHE_GENERATOR: "gpt-4o-mini",
    ModelRole.JUDGE: "gpt-4o",
    ModelRole.EMBEDDER: "offline-tf",
}

DEFAULT_LIVE_CONFIG: dict[str, Any] = {
    "roles": {
        "large_planner": {
            "model": "gpt-4o",
            "base_url": "https://api.openai.com/v1",
            "api_key_env": "OPENAI_API_KEY",
        },
        "small_planner": {
            "model": "Meta-Llama-3.1-8B-Instruct-Turbo",
            "base_url": "https://api.together.xyz/v1",
            "api_key_env": "TOGETHER_API_KEY",
        },
        "actor": {
            "model": "Meta-Llama-3.1-8B-Instruct-Turbo",
            "base_url": "https://api.together.xyz/v1",
            "api_key_env": "TOGETHER_API_KEY",
        },
        "keyword_extractor": {
            "model": "gpt-4o-mini",
            "base_url": "https://api.openai.com/v1",
            "api_key_env": "OPENAI_API_KEY",
        },
        "cache_generator": {
            "model": "gpt-4o-mini",
            "base_url": "https://api.openai.com/v1",
            "api_key_env": "OPENAI_API_KEY",
        },
        "judge": {
            "model": "gpt-4o",
            "base_url": "https://api.openai.com/v1",
            "api_key_env": "OPENAI_API_KEY",
        },
    },
}


def pricing_from_config(doc: Mapping[str, Any]) -> PricingTable:
    pricing = DEFAULT_PRICING
    if "pricing" in doc:
        pricing = pricing.with_overrides(doc["pricing"])
    return pricing


def scripted_gateway_from_doc(
    doc: Mapping[str, Any],
    *,
    ledger: Any = None,
) -> tuple[Gateway, ScriptedProvider]:
    """Build a gateway from a scripted-provider document.

    Document shape::

        {"models": {"large_planner": "gpt-4o", ...},           # optional
         "scripts": {"large_planner": ["...", {"text": "...",
                      "input_tokens": 10, "output_tokens": 2}], ...}}

    A bare mapping of role -> replies (no "scripts" key) is also accepted.
    """
    scripts = doc.get("scripts", doc)
    if not isinstance(scripts, Mapping):
        raise ConfigError("scripted provider document must map roles to reply lists")
    unknown = [k for k in scripts if k not in {r.value for r in ModelRole} and k not in ("models", "pricing")]
    if unknown:
        raise ConfigError(f"unknown role(s) in script document: {unknown}")
    provider = ScriptedProvider({k: v for k, v in scripts.items() if k not in ("models", "pricing")})
    models = dict(DEFAULT_SCRIPTED_MODELS)
    for role_key, model_id in doc.get("models", {}).items():
        models[ModelRole(role_key)] = str(model_id)
    bindings = {
        role: RoleBinding(model_id=models[role], provider=provider)
        for role in ModelRole
        if role is not ModelRole.EMBEDDER
    }
    gateway = Gateway(bindings, ledger=ledger)
    return gateway, provider


def live_gateway_from_config(
    doc: Mapping[str, Any] | None = None,
    *,
    ledger: Any = None,
    environ: Mapping[str, str] | None = None,
    transport: Transport | None = None,
) -> Gateway:
    """Build a gateway over real HTTP providers from a config document."""
    doc = doc or DEFAULT_LIVE_CONFIG
    env = environ if environ is not None else os.environ
    roles = doc.get("roles")
    if not roles:
        raise ConfigError("provider config has no 'roles' section")
    providers: dict[tuple[str, str | None], HttpChatProvider] = {}
    bindings: dict[ModelRole, RoleBinding] = {}
    for role_key, spec in roles.items():
        role = ModelRole(role_key)
        base_url = spec.get("base_url")
        model_id = spec.get("model")
        if not base_url or not model_id:
            raise ConfigError(f"role {role_key!r} needs both 'model' and 'base_url'")
        api_key = None
        key_env = spec.get("api_key_env")
        if key_env:
            api_key = env.get(key_env)
            if not api_key:
                raise ConfigError(
                    f"environment variable {key_env!r} (role {role_key!r}) is not set"
                )
        cache_key = (base_url, api_key)
        if cache_key not in providers:
            providers[cache_key] = HttpChatProvider(base_url, api_key, transport=transport)
        bindings[role] = RoleBinding(model_id=model_id, provider=providers[cache_key])
    remote_embedder = None
    emb = doc.get("embedder")
    if emb:
        key = env.get(emb["api_key_env"]) if emb.get("api_key_env") else None
        if emb.get("api_key_env") and not key:
            raise ConfigError(f"environment variable {emb['api_key_env']!r} (embedder) is not set")
        remote_embedder = EmbedderBinding(
            model_id=emb["model"],
            provider=HttpEmbeddingProvider(emb["base_url"], key, transport=transport),
        )
    return Gateway(bindings, ledger=ledger, remote_embedder=remote_embedder)
