"""Run a frozen encoder over a corpus and write the embedding file.

Exports up to five channels. sentence/e1/e2 encode the sentence and the
two entity surface strings (entities in isolation, recorded in metadata
as entity_mode so an in-context variant can be added without a format
change); relation encodes the eight label verbalizations under
"label:<code>" keys; pure_relation encodes the sentence with entity
boundary markers inserted and concatenates the two marker-position
vectors, so its width is twice the encoder width.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpusio import Instance, LABEL_KEY_PREFIX, RELATION_VERBALIZATIONS, read_corpus
from .encoder import POOLING_MODES, TextEncoder, insert_markers
from .errors import ExportError
from .storeio import Record, sha256_file, write_records

logger = logging.getLogger(__name__)

EXPORTABLE_CHANNELS = ("sentence", "e1", "e2", "relation", "pure_relation")

#: Default encoder checkpoint per corpus language.
DEFAULT_ENCODERS = {
    "en": "roberta-base",
    "tr": "TURKCELL/roberta-base-turkish-uncased",
}

ENTITY_MODE = "surface_isolated"


@dataclass(frozen=True)
class ExportSpec:
    """Everything one export run needs."""

    corpus_path: str
    output_path: str
    encoders: Mapping[str, str] = field(
        default_factory=lambda: dict(DEFAULT_ENCODERS))
    channels: tuple[str, ...] = EXPORTABLE_CHANNELS
    pooling: str = "cls_token"
    batch_size: int = 16
    device: str = "cpu"

    def __post_init__(self) -> None:
        if not self.channels:
            raise ExportError("no channels requested")
        unknown = [ch for ch in self.channels if ch not in EXPORTABLE_CHANNELS]
        if unknown:
            raise ExportError(
                f"cannot export channels {unknown}; valid: "
                f"{', '.join(EXPORTABLE_CHANNELS)}"
            )
        if len(set(self.channels)) != len(self.channels):
            raise ExportError("duplicate channel in request")
        if self.pooling not in POOLING_MODES:
            raise ExportError(
                f"pooling {self.pooling!r} not one of {POOLING_MODES}")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


@dataclass(frozen=True)
class ExportResult:
    output_path: str
    metadata_path: str
    digest: str
    records: int
    channel_dims: dict[str, int]
    truncated_ids: tuple[str, ...]


def _batched(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def _encode_texts(encoder: TextEncoder, ids: Sequence[str],
                  texts: Sequence[str], channel: str, pooling: str,
                  batch_size: int, truncated: set[str]) -> list[Record]:
    records: list[Record] = []
    offset = 0
    for batch in _batched(list(texts), batch_size):
        vectors, overflowed = encoder.encode(batch, pooling)
        for i, vec in enumerate(vectors):
            iid = ids[offset + i]
            records.append((iid, channel, vec))
            if overflowed[i]:
                truncated.add(iid)
        offset += len(batch)
    return records


def _encode_marked(encoder: TextEncoder, instances: Sequence[Instance],
                   batch_size: int, truncated: set[str]) -> list[Record]:
    ids = [inst.id for inst in instances]
    texts = []
    for inst in instances:
        try:
            texts.append(insert_markers(inst.sentence,
                                        (inst.e1.start, inst.e1.end),
                                        (inst.e2.start, inst.e2.end)))
        except ExportError as exc:
            raise ExportError(f"instance {inst.id!r}: {exc}") from exc
    records: list[Record] = []
    offset = 0
    for batch in _batched(texts, batch_size):
        try:
            vectors, overflowed = encoder.encode_marked(batch)
        except ExportError as exc:
            raise ExportError(
                f"pure_relation export failed near instance "
                f"{ids[offset]!r}: {exc}"
            ) from exc
        for i, vec in enumerate(vectors):
            iid = ids[offset + i]
            records.append((iid, "pure_relation", vec))
            if overflowed[i]:
                truncated.add(iid)
        offset += len(batch)
    return records


def export(spec: ExportSpec) -> ExportResult:
    """Encode the corpus and write the embedding file plus metadata sidecar.

    Texts longer than the encoder's maximum length are truncated with a
    logged warning and flagged in the metadata, except that a pure_relation
    truncation which drops an entity marker is an error: the vector would
    describe the wrong span.
    """
    instances = read_corpus(spec.corpus_path)
    language = instances[0].lang
    if language not in spec.encoders:
        raise ExportError(
            f"no encoder configured for language {language!r}; have "
            f"{sorted(spec.encoders)}"
        )
    encoder = TextEncoder(spec.encoders[language], device=spec.device)

    truncated: set[str] = set()
    records: list[Record] = []
    ids = [inst.id for inst in instances]
    for channel in spec.channels:
        if channel == "sentence":
            records += _encode_texts(
                encoder, ids, [inst.sentence for inst in instances],
                "sentence", spec.pooling, spec.batch_size, truncated)
        elif channel == "e1":
            records += _encode_texts(
                encoder, ids, [inst.e1.text for inst in instances],
                "e1", spec.pooling, spec.batch_size, truncated)
        elif channel == "e2":
            records += _encode_texts(
                encoder, ids, [inst.e2.text for inst in instances],
                "e2", spec.pooling, spec.batch_size, truncated)
        elif channel == "relation":
            codes = list(RELATION_VERBALIZATIONS)
            records += _encode_texts(
                encoder, [LABEL_KEY_PREFIX + code for code in codes],
                [RELATION_VERBALIZATIONS[code] for code in codes],
                "relation", spec.pooling, spec.batch_size, truncated)
        else:
            records += _encode_marked(encoder, instances, spec.batch_size,
                                      truncated)

    if truncated:
        logger.warning(
            "%d of %d inputs exceeded the encoder maximum of %d tokens and "
            "were truncated: %s",
            len(truncated), len(instances), encoder.max_length,
            ", ".join(sorted(truncated)),
        )

    digest = write_records(records, spec.output_path)
    dims = _dims_of(records)
    metadata = {
        "format": "RAREMB01",
        "encoder": spec.encoders[language],
        "language": language,
        "pooling": spec.pooling,
        "entity_mode": ENTITY_MODE,
        "channel_dims": dims,
        "records": len(records),
        "corpus_sha256": sha256_file(spec.corpus_path),
        "output_sha256": digest,
        "truncated": bool(truncated),
        "truncated_ids": sorted(truncated),
    }
    metadata_path = Path(spec.output_path).with_name(
        Path(spec.output_path).name + ".meta.json")
    metadata_path.write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return ExportResult(
        output_path=str(spec.output_path),
        metadata_path=str(metadata_path),
        digest=digest,
        records=len(records),
        channel_dims=dims,
        truncated_ids=tuple(sorted(truncated)),
    )


def _dims_of(records: Sequence[Record]) -> dict[str, int]:
    dims: dict[str, int] = {}
    for _, channel, vec in records:
        dims.setdefault(channel, int(np.asarray(vec).shape[0]))
    return dims
