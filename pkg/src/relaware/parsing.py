"""Mapping free-text model responses onto the closed label set.

Normalization uppercases the text, strips markdown emphasis characters, and
collapses whitespace. Canonical verbalizations (plus any configured alias
phrases, e.g. localized abbreviations) are scanned before bare codes:
reasoning prose often contains code-like words ("trip", "trap"), so the
longer phrases get priority. Within each phase the first match in reading
order wins. Anything else is the INVALID sentinel, which downstream scoring
counts as wrong, never as a dropped record.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import INVALID, LABELS, RelationLabel, label_from_code

PARSE_RULES = ("verbalization_match", "code_match", "none")

_EMPHASIS = str.maketrans("", "", "*_`~")

_CODE_PATTERN = re.compile(
    r"\b(" + "|".join(sorted((label.code.upper() for label in LABELS),
                             key=len, reverse=True)) + r")\b"
)
_CODE_TO_LABEL = {label.code.upper(): label for label in LABELS}


@dataclass(frozen=True)
class ParseOutcome:
    label: RelationLabel
    matched_span: str
    rule: str

    def __post_init__(self) -> None:
        assert (self.rule == "none") == (self.label is INVALID)


def normalize(text: str) -> str:
    """Uppercase, drop markdown emphasis, collapse whitespace. Idempotent."""
    return " ".join(text.translate(_EMPHASIS).upper().split())


def _phrase_table(
    aliases: Mapping[str, Sequence[str]] | None,
) -> list[tuple[str, RelationLabel]]:
    table = [(label.verbalization, label) for label in LABELS]
    for code, phrases in (aliases or {}).items():
        label = label_from_code(code)
        table.extend((normalize(phrase), label) for phrase in phrases if phrase)
    return table


def parse_relation(
    text: str,
    aliases: Mapping[str, Sequence[str]] | None = None,
) -> ParseOutcome:
    """Extract the predicted label from a raw model response.

    aliases maps label codes to extra accepted phrases; they join the
    verbalization phase. parse(normalize(x)) == parse(x).
    """
    haystack = normalize(text)

    best: tuple[int, int, RelationLabel] | None = None  # (position, -len, label)
    for phrase, label in _phrase_table(aliases):
        at = haystack.find(phrase)
        if at == -1:
            continue
        candidate = (at, -len(phrase), label)
        if best is None or candidate[:2] < best[:2]:
            best = candidate
    if best is not None:
        at, neg_len, label = best
        return ParseOutcome(label=label, matched_span=haystack[at:at - neg_len],
                            rule="verbalization_match")

    code_match = _CODE_PATTERN.search(haystack)
    if code_match is not None:
        return ParseOutcome(
            label=_CODE_TO_LABEL[code_match.group(1)],
            matched_span=code_match.group(1),
            rule="code_match",
        )
    return ParseOutcome(label=INVALID, matched_span="", rule="none")
