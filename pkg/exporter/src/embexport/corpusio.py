"""Minimal reader for the relation-extraction corpus JSONL format.

The exporter only consumes what it encodes: the sentence, the two entity
spans with their surface strings, the gold relation code (for the label
vocabulary), and the language tag. Validation is limited to those fields;
deeper semantic checks belong to the consumer of the exported vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CorpusError

#: Closed relation label set with the uppercase verbalizations that the
#: relation channel encodes, keyed in the output as "label:<code>".
RELATION_VERBALIZATIONS = {
    "TrIP": "TREATMENT IMPROVES MEDICAL PROBLEM",
    "TrWP": "TREATMENT WORSENS MEDICAL PROBLEM",
    "TrCP": "TREATMENT CAUSES MEDICAL PROBLEM",
    "TrAP": "TREATMENT IS ADMINISTERED FOR MEDICAL PROBLEM",
    "TrNAP": "TREATMENT IS NOT ADMINISTERED BECAUSE OF MEDICAL PROBLEM",
    "TeRP": "TEST REVEALS MEDICAL PROBLEM",
    "TeCP": "TEST IS CONDUCTED TO INVESTIGATE MEDICAL PROBLEM",
    "PIP": "MEDICAL PROBLEM INDICATES MEDICAL PROBLEM",
}

LABEL_KEY_PREFIX = "label:"

_TOP_KEYS = {"id", "lang", "sentence", "e1", "e2", "relation"}
_ENTITY_KEYS = {"text", "start", "end", "type"}


@dataclass(frozen=True)
class Span:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class Instance:
    id: str
    lang: str
    sentence: str
    e1: Span
    e2: Span
    relation: str


def _parse_span(obj: object, sentence: str, where: str) -> Span:
    if not isinstance(obj, dict) or not _ENTITY_KEYS <= set(obj):
        raise CorpusError(f"{where}: entity must be an object with keys "
                          f"{sorted(_ENTITY_KEYS)}")
    text, start, end = obj["text"], obj["start"], obj["end"]
    if not isinstance(text, str) or not isinstance(start, int) \
            or not isinstance(end, int):
        raise CorpusError(f"{where}: entity fields have wrong types")
    if not 0 <= start < end <= len(sentence):
        raise CorpusError(f"{where}: span [{start}, {end}) outside sentence")
    if sentence[start:end] != text:
        raise CorpusError(
            f"{where}: span [{start}, {end}) reads "
            f"{sentence[start:end]!r}, not {text!r}"
        )
    return Span(text=text, start=start, end=end)


def read_corpus(path: str | Path) -> list[Instance]:
    """Parse a corpus file; every instance must carry the same language."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    instances: list[Instance] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or not _TOP_KEYS <= set(obj):
                raise CorpusError(f"{where}: record must be an object with "
                                  f"keys {sorted(_TOP_KEYS)}")
            iid = obj["id"]
            if not isinstance(iid, str) or not iid:
                raise CorpusError(f"{where}: id must be a non-empty string")
            if iid in seen:
                raise CorpusError(f"{where}: duplicate id {iid!r}")
            seen.add(iid)
            if iid.startswith(LABEL_KEY_PREFIX):
                raise CorpusError(
                    f"{where}: id {iid!r} collides with the reserved "
                    f"{LABEL_KEY_PREFIX!r} key prefix"
                )
            sentence = obj["sentence"]
            if not isinstance(sentence, str) or not sentence:
                raise CorpusError(f"{where}: sentence must be a non-empty string")
            code = obj["relation"]
            if code not in RELATION_VERBALIZATIONS:
                raise CorpusError(
                    f"{where}: unknown relation code {code!r}; valid: "
                    f"{', '.join(RELATION_VERBALIZATIONS)}"
                )
            lang = obj["lang"]
            if not isinstance(lang, str) or not lang:
                raise CorpusError(f"{where}: lang must be a non-empty string")
            instances.append(Instance(
                id=iid,
                lang=lang,
                sentence=sentence,
                e1=_parse_span(obj["e1"], sentence, f"{where} (e1)"),
                e2=_parse_span(obj["e2"], sentence, f"{where} (e2)"),
                relation=code,
            ))
    if not instances:
        raise CorpusError(f"{path}: corpus is empty")
    languages = {inst.lang for inst in instances}
    if len(languages) > 1:
        raise CorpusError(
            f"{path}: corpus mixes languages {sorted(languages)}; one "
            f"encoder handles one language"
        )
    return instances
