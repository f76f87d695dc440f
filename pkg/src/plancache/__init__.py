"""Plan-template caching middleware for Plan-Act LLM agents.

Extracts structured plan templates from completed agent runs, indexes them
by intent keyword, and adapts them with a lightweight model on cache hits so
the expensive planner only runs on genuinely new kinds of tasks. Ships with
a benchmark harness comparing plan caching against four baseline strategies.
"""

from .baselines import (
    AccuracyOptimalStrategy,
    CostOptimalStrategy,
    FullHistoryCacheStrategy,
    FullHistoryStore,
    PlanCacheStrategy,
    SemanticCacheStore,
    SemanticCacheStrategy,
    StrategyKind,
)
from .bench import (
    BenchConfig,
    JudgeVerdict,
    LabeledPair,
    MatchAnalysisReport,
    RunReport,
    TaskFormat,
    build_strategy,
    judge,
    load_tasks,
    matching_analysis,
    run_benchmark,
)
from .errors import (
    ConfigError,
    EmptyKeyword,
    EscalationRequired,
    FormatError,
    IncompleteLog,
    InvalidTemplate,
    MalformedAdaptation,
    MalformedGeneration,
    PersistenceError,
    PlanCacheError,
    ProviderError,
    ScriptExhausted,
    TemplateExhausted,
    UnknownPricing,
    UnparseableVerdict,
)
from .gateway import (
    ChatExchange,
    ChatMessage,
    Gateway,
    GenerationConfig,
    HttpChatProvider,
    ModelPricing,
    ModelRole,
    OfflineEmbedder,
    PricingTable,
    RoleBinding,
    ScriptedProvider,
    ScriptedReply,
    Speaker,
    TokenUsage,
    cosine,
    cost_of,
    live_gateway_from_config,
    scripted_gateway_from_doc,
)
from .keywords import KeywordExtractor, normalize
from .ledger import CostBreakdown, CostComponent, CostLedger, LedgerRow, breakdown
from .model import (
    CacheEntry,
    ExecutionLog,
    PlanTemplate,
    TaskInstance,
    WorkflowItem,
    WorkflowKind,
    validate_workflow,
)
from .orchestrator import (
    Orchestrator,
    OrchestratorConfig,
    RunOutcome,
    RunPath,
    plan_act_loop,
)
from .store import CacheStats, PlanCache
from .templates import TemplateEngine

__version__ = "0.1.0"
