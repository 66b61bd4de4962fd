"""Exception hierarchy for the exporter."""

from __future__ import annotations


class ExportError(Exception):
    """Base class for all exporter failures."""


class CorpusError(ExportError):
    """Corpus file missing, malformed, or inconsistent."""


class EncoderError(ExportError):
    """Encoder failed to load or cannot represent an input."""
