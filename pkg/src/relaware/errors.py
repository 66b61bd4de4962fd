"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RelawareError(Exception):
    """Base class for every error raised by this package."""


class CorpusError(RelawareError):
    """Malformed corpus file, schema violation, or invalid sampling request."""


class StoreError(RelawareError):
    """Embedding store I/O or lookup failure, or invalid vector arithmetic."""


class MiningError(RelawareError):
    """Contrastive pair mining precondition or weight violation."""


class TrainingError(RelawareError):
    """Projection head training failure (divergence, NaN, bad batch)."""


class RetrievalError(RelawareError):
    """Demonstration retrieval precondition violation."""


class PromptError(RelawareError):
    """Prompt assembly or template resolution failure."""


class GatewayError(RelawareError):
    """Base class for LLM endpoint failures."""


class AuthError(GatewayError):
    """Missing or rejected API credentials; never retried."""


class RetryExhausted(GatewayError):
    """Retryable failures persisted past the configured retry budget."""


class CompletionTimeout(GatewayError):
    """Request timed out on every attempt."""


class MalformedResponse(GatewayError):
    """Endpoint returned a body that does not follow the expected schema."""


class MetricsError(RelawareError):
    """Invalid scoring records or inconsistent aggregate state."""


class ConfigError(RelawareError):
    """Invalid or incomplete run configuration."""
