"""Frozen-encoder embedding exporter for the RAREMB01 file format."""

from .corpusio import Instance, RELATION_VERBALIZATIONS, read_corpus
from .encoder import MARKERS, POOLING_MODES, TextEncoder, insert_markers
from .errors import CorpusError, EncoderError, ExportError
from .export import (
    DEFAULT_ENCODERS,
    EXPORTABLE_CHANNELS,
    ExportResult,
    ExportSpec,
    export,
)
from .storeio import MAGIC, sha256_file, write_records

__all__ = [
    "CorpusError",
    "DEFAULT_ENCODERS",
    "EncoderError",
    "EXPORTABLE_CHANNELS",
    "ExportError",
    "ExportResult",
    "ExportSpec",
    "Instance",
    "MAGIC",
    "MARKERS",
    "POOLING_MODES",
    "RELATION_VERBALIZATIONS",
    "TextEncoder",
    "export",
    "insert_markers",
    "read_corpus",
    "sha256_file",
    "write_records",
]
