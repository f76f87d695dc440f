"""Exception types shared across the package."""


class PlanCacheError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PlanCacheError):
    """Invalid or incomplete runtime configuration (roles, files, flags)."""


class ProviderError(PlanCacheError):
    """Transport or HTTP failure that survived the retry policy."""


class ScriptExhausted(PlanCacheError):
    """The scripted provider has no response left for a role.

    This always indicates a broken test fixture, never a runtime condition,
    so it is deliberately loud and is not absorbed anywhere.
    """


class EmptyKeyword(PlanCacheError):
    """Keyword normalization produced an empty string."""


class InvalidTemplate(PlanCacheError):
    """A plan template failed workflow validation or leaks task specifics."""


class IncompleteLog(PlanCacheError):
    """An execution log without a final output cannot be filtered."""


class MalformedGeneration(PlanCacheError):
    """The template generator reply could not be parsed, even after retry."""


class MalformedAdaptation(PlanCacheError):
    """A template adaptation reply could not be parsed."""


class EscalationRequired(PlanCacheError):
    """The cache-hit path gave up; the caller must rerun via the miss path."""


class TemplateExhausted(PlanCacheError):
    """Adaptation was asked for a step past the end of the template."""


class PersistenceError(PlanCacheError):
    """Cache file could not be written, read, or did not match the schema."""


class UnknownPricing(PlanCacheError):
    """No pricing entry exists for a model a ledger row refers to."""


class UnparseableVerdict(PlanCacheError):
    """The judge reply did not start with '1' or '0'."""


class FormatError(PlanCacheError):
    """A task dataset record is malformed; the message names the record."""
