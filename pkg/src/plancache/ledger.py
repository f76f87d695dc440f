"""Per-run and per-benchmark dollar accounting with a component breakdown.

Serving cost covers the planner, actor, and cache machinery. Judge and
embedding spend is evaluation apparatus: it is recorded and reported, but
excluded from serving totals and overhead fractions.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_EVEN
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .gateway import ChatExchange, ModelRole, PricingTable, TokenUsage, cost_of

ZERO = Decimal("0")
_CENT = Decimal("0.01")


class CostComponent(str, Enum):
    LARGE_PLANNER = "large_planner"
    SMALL_PLANNER = "small_planner"
    ACTOR = "actor"
    KEYWORD_EXTRACTION = "keyword_extraction"
    CACHE_GENERATION = "cache_generation"
    JUDGE = "judge"
    EMBEDDING = "embedding"


_ROLE_TO_COMPONENT: dict[ModelRole, CostComponent] = {
    ModelRole.LARGE_PLANNER: CostComponent.LARGE_PLANNER,
    ModelRole.SMALL_PLANNER: CostComponent.SMALL_PLANNER,
    ModelRole.ACTOR: CostComponent.ACTOR,
    ModelRole.KEYWORD_EXTRACTOR: CostComponent.KEYWORD_EXTRACTION,
    ModelRole.CACHE_GENERATOR: CostComponent.CACHE_GENERATION,
    ModelRole.JUDGE: CostComponent.JUDGE,
    ModelRole.EMBEDDER: CostComponent.EMBEDDING,
}

# Evaluation-only components: reported separately, never part of serving cost.
EVALUATION_COMPONENTS = frozenset({CostComponent.JUDGE, CostComponent.EMBEDDING})
OVERHEAD_COMPONENTS = frozenset(
    {CostComponent.KEYWORD_EXTRACTION, CostComponent.CACHE_GENERATION}
)


def component_for_role(role: ModelRole) -> CostComponent:
    return _ROLE_TO_COMPONENT[role]


@dataclass(frozen=True)
class LedgerRow:
    run_id: str
    component: CostComponent
    model_id: str
    input_tokens: int
    output_tokens: int
    usd: Decimal


class CostLedger:
    """Append-only record of model calls with exact decimal pricing."""

    def __init__(self, pricing: PricingTable):
        self._pricing = pricing
        self._rows: list[LedgerRow] = []
        self._lock = threading.Lock()

    @property
    def pricing(self) -> PricingTable:
        return self._pricing

    def record(
        self, component: CostComponent, exchange: ChatExchange, run_id: str = ""
    ) -> LedgerRow:
        """Append one immutable row for a completed exchange.

        Raises UnknownPricing when the exchange's model has no price entry;
        nothing is appended in that case.
        """
        pricing = self._pricing.get(exchange.model_id)
        row = LedgerRow(
            run_id=run_id,
            component=component,
            model_id=exchange.model_id,
            input_tokens=exchange.usage.input_tokens,
            output_tokens=exchange.usage.output_tokens,
            usd=cost_of(exchange.usage, pricing),
        )
        with self._lock:
            self._rows.append(row)
        return row

    def record_exchange(self, role: ModelRole, exchange: ChatExchange, run_id: str = "") -> LedgerRow:
        return self.record(component_for_role(role), exchange, run_id=run_id)

    @property
    def rows(self) -> tuple[LedgerRow, ...]:
        with self._lock:
            return tuple(self._rows)

    def rows_for_run(self, run_id: str) -> tuple[LedgerRow, ...]:
        return tuple(r for r in self.rows if r.run_id == run_id)

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["run_id", "component", "model", "input_tokens", "output_tokens", "usd"]
            )
            for row in self.rows:
                writer.writerow(
                    [
                        row.run_id,
                        row.component.value,
                        row.model_id,
                        row.input_tokens,
                        row.output_tokens,
                        str(row.usd),
                    ]
                )


@dataclass(frozen=True)
class ComponentTotal:
    usd: Decimal
    usage: TokenUsage
    calls: int


@dataclass(frozen=True)
class CostBreakdown:
    """Serving-cost totals grouped by component.

    ``total_usd`` is the exact decimal sum over serving components only;
    ``evaluation_usd`` carries judge and embedding spend separately.
    """

    per_component: Mapping[CostComponent, ComponentTotal]
    total_usd: Decimal
    overhead_usd: Decimal
    overhead_fraction: Decimal
    evaluation_usd: Decimal

    def component_usd(self, component: CostComponent) -> Decimal:
        total = self.per_component.get(component)
        return total.usd if total else ZERO

    def percent_share(self, component: CostComponent) -> Decimal:
        """Component share of serving cost in percent, round-half-even to 2 dp."""
        return _percent(self.component_usd(component), self.total_usd)

    def overhead_percent(self) -> Decimal:
        return _percent(self.overhead_usd, self.total_usd)

    def formatted_rows(self) -> list[tuple[str, str]]:
        """Rows of (component, "$u.uuuu (pp.pp%)") over serving components."""
        rows = []
        for component in CostComponent:
            if component in EVALUATION_COMPONENTS:
                continue
            usd = self.component_usd(component)
            rows.append((component.value, f"${_usd_4dp(usd)} ({self.percent_share(component)}%)"))
        rows.append(
            ("cache_overhead", f"${_usd_4dp(self.overhead_usd)} ({self.overhead_percent()}%)")
        )
        rows.append(("total", f"${_usd_4dp(self.total_usd)} (100%)"))
        return rows


_TENTH_CENT = Decimal("0.0001")


def _usd_4dp(usd: Decimal) -> Decimal:
    return usd.quantize(_TENTH_CENT, rounding=ROUND_HALF_EVEN)


def _percent(part: Decimal, whole: Decimal) -> Decimal:
    if whole == 0:
        return Decimal("0.00")
    return (part / whole * 100).quantize(_CENT, rounding=ROUND_HALF_EVEN)


def breakdown(rows: Iterable[LedgerRow]) -> CostBreakdown:
    """Group ledger rows by component and compute serving totals."""
    usd: dict[CostComponent, Decimal] = {}
    usage: dict[CostComponent, TokenUsage] = {}
    calls: dict[CostComponent, int] = {}
    for row in rows:
        usd[row.component] = usd.get(row.component, ZERO) + row.usd
        usage[row.component] = usage.get(row.component, TokenUsage()) + TokenUsage(
            row.input_tokens, row.output_tokens
        )
        calls[row.component] = calls.get(row.component, 0) + 1
    per_component = {
        component: ComponentTotal(usd=usd[component], usage=usage[component], calls=calls[component])
        for component in usd
    }
    total = sum(
        (v for c, v in usd.items() if c not in EVALUATION_COMPONENTS), start=ZERO
    )
    overhead = sum((v for c, v in usd.items() if c in OVERHEAD_COMPONENTS), start=ZERO)
    evaluation = sum((v for c, v in usd.items() if c in EVALUATION_COMPONENTS), start=ZERO)
    fraction = (overhead / total) if total != 0 else ZERO
    return CostBreakdown(
        per_component=per_component,
        total_usd=total,
        overhead_usd=overhead,
        overhead_fraction=fraction,
        evaluation_usd=evaluation,
    )
