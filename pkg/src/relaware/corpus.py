"""Clinical relation-extraction data model and JSONL corpus handling.

A corpus is a JSONL file of single-sentence instances, each carrying two
entity mentions with character offsets and one gold relation label out of a
closed set of eight. Offsets are half-open [start, end) over Unicode code
points. Parsing is strict: unknown keys, bad spans, duplicate ids, or
label/concept-type mismatches are hard errors that name the offending line.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CorpusError

LANGUAGES = ("en", "tr")
SPLITS = ("train", "test")
CONCEPT_TYPES = ("problem", "treatment", "test")


@dataclass(frozen=True)
class RelationLabel:
    """One relation class: canonical code plus its uppercase verbalization."""

    code: str
    verbalization: str

    def __str__(self) -> str:
        return self.code


LABELS: tuple[RelationLabel, ...] = (
    RelationLabel("TrIP", "TREATMENT IMPROVES MEDICAL PROBLEM"),
    RelationLabel("TrWP", "TREATMENT WORSENS MEDICAL PROBLEM"),
    RelationLabel("TrCP", "TREATMENT CAUSES MEDICAL PROBLEM"),
    RelationLabel("TrAP", "TREATMENT IS ADMINISTERED FOR MEDICAL PROBLEM"),
    RelationLabel("TrNAP", "TREATMENT IS NOT ADMINISTERED BECAUSE OF MEDICAL PROBLEM"),
    RelationLabel("TeRP", "TEST REVEALS MEDICAL PROBLEM"),
    RelationLabel("TeCP", "TEST CONDUCTED TO INVESTIGATE MEDICAL PROBLEM"),
    RelationLabel("PIP", "MEDICAL PROBLEM INDICATES MEDICAL PROBLEM"),
)

#: Sentinel for unparseable predictions. Never a gold label, never prompted.
INVALID = RelationLabel("INVALID", "")

LABEL_CODES: tuple[str, ...] = tuple(label.code for label in LABELS)

_BY_CODE = {label.code.lower(): label for label in LABELS}

# Allowed unordered concept-type pair per label.
_PAIR_RULES: dict[str, tuple[str, str]] = {
    "TrIP": ("problem", "treatment"),
    "TrWP": ("problem", "treatment"),
    "TrCP": ("problem", "treatment"),
    "TrAP": ("problem", "treatment"),
    "TrNAP": ("problem", "treatment"),
    "TeRP": ("problem", "test"),
    "TeCP": ("problem", "test"),
    "PIP": ("problem", "problem"),
}


def label_from_code(code: str) -> RelationLabel:
    """Resolve a label code case-insensitively.

    Raises CorpusError listing the valid codes when the code is unknown.
    """
    label = _BY_CODE.get(code.lower())
    if label is None:
        raise CorpusError(
            f"unknown relation code {code!r}; valid codes: {', '.join(LABEL_CODES)}"
        )
    return label


@dataclass(frozen=True)
class EntityMention:
    """A contiguous span in the sentence with its concept type."""

    surface: str
    start: int
    end: int
    concept_type: str

    def validate(self, sentence: str, instance_id: str) -> None:
        if self.concept_type not in CONCEPT_TYPES:
            raise CorpusError(
                f"instance {instance_id!r}: concept type {self.concept_type!r} "
                f"not one of {CONCEPT_TYPES}"
            )
        if not (0 <= self.start < self.end <= len(sentence)):
            raise CorpusError(
                f"instance {instance_id!r}: span [{self.start}, {self.end}) out of "
                f"bounds for sentence of length {len(sentence)}"
            )
        actual = sentence[self.start : self.end]
        if actual != self.surface:
            raise CorpusError(
                f"instance {instance_id!r}: span [{self.start}, {self.end}) reads "
                f"{actual!r}, not {self.surface!r}"
            )


@dataclass(frozen=True)
class REInstance:
    """One labeled sentence with exactly two entity mentions."""

    id: str
    lang: str
    sentence: str
    e1: EntityMention
    e2: EntityMention
    gold: RelationLabel

    def validate(self) -> None:
        if self.lang not in LANGUAGES:
            raise CorpusError(
                f"instance {self.id!r}: language {self.lang!r} not one of {LANGUAGES}"
            )
        self.e1.validate(self.sentence, self.id)
        self.e2.validate(self.sentence, self.id)
        want = _PAIR_RULES[self.gold.code]
        got = tuple(sorted((self.e1.concept_type, self.e2.concept_type)))
        if got != want:
            raise CorpusError(
                f"instance {self.id!r}: label {self.gold.code} pairs concept types "
                f"{want}, got {got}"
            )


@dataclass(frozen=True)
class Corpus:
    """Immutable ordered collection of instances for one split."""

    split: str
    instances: tuple[REInstance, ...]
    label_histogram: Mapping[str, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise CorpusError(f"split {self.split!r} not one of {SPLITS}")
        if not isinstance(self.instances, tuple):
            object.__setattr__(self, "instances", tuple(self.instances))
        hist = self.recount()
        if self.label_histogram is None:
            object.__setattr__(self, "label_histogram", hist)
        elif dict(self.label_histogram) != hist:
            raise CorpusError("label_histogram does not match a recount")

    def __len__(self) -> int:
        return len(self.instances)

    def recount(self) -> dict[str, int]:
        """Histogram of gold codes in canonical label order."""
        hist = {code: 0 for code in LABEL_CODES}
        for inst in self.instances:
            hist[inst.gold.code] += 1
        return {code: n for code, n in hist.items() if n > 0}

    def by_id(self, instance_id: str) -> REInstance:
        index = self.__dict__.get("_index")
        if index is None:
            index = {inst.id: inst for inst in self.instances}
            object.__setattr__(self, "_index", index)
        try:
            return index[instance_id]
        except KeyError:
            raise CorpusError(f"no instance with id {instance_id!r}") from None


_TOP_KEYS = frozenset({"id", "lang", "sentence", "e1", "e2", "relation"})
_ENTITY_KEYS = frozenset({"text", "start", "end", "type"})


def _parse_entity(obj: object, where: str) -> EntityMention:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: entity must be an object")
    unknown = set(obj) - _ENTITY_KEYS
    if unknown:
        raise CorpusError(f"{where}: unknown entity keys {sorted(unknown)}")
    missing = _ENTITY_KEYS - set(obj)
    if missing:
        raise CorpusError(f"{where}: missing entity keys {sorted(missing)}")
    text, start, end, ctype = obj["text"], obj["start"], obj["end"], obj["type"]
    if not isinstance(text, str):
        raise CorpusError(f"{where}: entity text must be a string")
    # bool is an int subclass; reject it explicitly
    if isinstance(start, bool) or isinstance(end, bool):
        raise CorpusError(f"{where}: entity offsets must be integers")
    if not isinstance(start, int) or not isinstance(end, int):
        raise CorpusError(f"{where}: entity offsets must be integers")
    if not isinstance(ctype, str):
        raise CorpusError(f"{where}: entity type must be a string")
    return EntityMention(surface=text, start=start, end=end, concept_type=ctype)


def _parse_line(raw: str, lineno: int) -> REInstance:
    where = f"line {lineno}"
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{where}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: each line must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise CorpusError(f"{where}: unknown keys {sorted(unknown)}")
    missing = _TOP_KEYS - set(obj)
    if missing:
        raise CorpusError(f"{where}: missing keys {sorted(missing)}")
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise CorpusError(f"{where}: id must be a non-empty string")
    if not isinstance(obj["sentence"], str):
        raise CorpusError(f"{where}: sentence must be a string")
    if not isinstance(obj["lang"], str):
        raise CorpusError(f"{where}: lang must be a string")
    if not isinstance(obj["relation"], str):
        raise CorpusError(f"{where}: relation must be a string")
    try:
        gold = label_from_code(obj["relation"])
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from exc
    inst = REInstance(
        id=obj["id"],
        lang=obj["lang"],
        sentence=obj["sentence"],
        e1=_parse_entity(obj["e1"], f"{where} (e1)"),
        e2=_parse_entity(obj["e2"], f"{where} (e2)"),
        gold=gold,
    )
    try:
        inst.validate()
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from exc
    return inst


def parse_corpus(path: str | Path, expected_lang: str, split: str = "train") -> Corpus:
    """Parse a strict JSONL corpus file.

    Every instance must carry ``expected_lang``; ids must be unique. Error
    messages preserve 1-based line numbers.
    """
    if expected_lang not in LANGUAGES:
        raise CorpusError(f"expected_lang {expected_lang!r} not one of {LANGUAGES}")
    path = Path(path)
    instances: list[REInstance] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            inst = _parse_line(raw, lineno)
            if inst.lang != expected_lang:
                raise CorpusError(
                    f"line {lineno}: lang {inst.lang!r} does not match expected "
                    f"{expected_lang!r}"
                )
            if inst.id in seen:
                raise CorpusError(f"line {lineno}: duplicate id {inst.id!r}")
            seen.add(inst.id)
            instances.append(inst)
    return Corpus(split=split, instances=tuple(instances))


def instance_to_dict(inst: REInstance) -> dict:
    """Canonical JSON-ready form of one instance (fixed key order)."""
    return {
        "id": inst.id,
        "lang": inst.lang,
        "sentence": inst.sentence,
        "e1": {
            "text": inst.e1.surface,
            "start": inst.e1.start,
            "end": inst.e1.end,
            "type": inst.e1.concept_type,
        },
        "e2": {
            "text": inst.e2.surface,
            "start": inst.e2.start,
            "end": inst.e2.end,
            "type": inst.e2.concept_type,
        },
        "relation": inst.gold.code,
    }


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize to canonical JSONL (compact separators, UTF-8, one trailing \\n)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")


def stratified_sample(corpus: Corpus, n: int, seed: int) -> Corpus:
    """Label-stratified subsample of size exactly n.

    Per-label quotas follow the corpus label distribution with
    largest-remainder rounding, so each label's count differs from its exact
    share by less than one. Selection within a label is a seeded uniform
    draw; output order is the original corpus order.
    """
    total = len(corpus)
    if not 0 <= n <= total:
        raise CorpusError(f"sample size {n} outside [0, {total}]")
    if n == 0:
        return Corpus(split=corpus.split, instances=())

    by_label: dict[str, list[int]] = {}
    for idx, inst in enumerate(corpus.instances):
        by_label.setdefault(inst.gold.code, []).append(idx)
    # Canonical label order keeps remainder tie-breaks deterministic.
    codes = [code for code in LABEL_CODES if code in by_label]

    quotas: dict[str, int] = {}
    remainders: list[tuple[float, str]] = []
    for code in codes:
        exact = n * len(by_label[code]) / total
        quotas[code] = int(exact)
        remainders.append((exact - int(exact), code))
    shortfall = n - sum(quotas.values())
    # Stable sort: ties in remainder fall back to canonical label order.
    remainders.sort(key=lambda pair: -pair[0])
    for _, code in remainders:
        if shortfall == 0:
            break
        if quotas[code] < len(by_label[code]):
            quotas[code] += 1
            shortfall -= 1
    if shortfall:
        raise CorpusError("could not satisfy stratified quotas")  # pragma: no cover

    rng = random.Random(seed)
    chosen: list[int] = []
    for code in codes:
        chosen.extend(rng.sample(by_label[code], quotas[code]))
    chosen.sort()
    return Corpus(split=corpus.split,
                  instances=tuple(corpus.instances[i] for i in chosen))


def load_display_names(path: str | Path) -> dict[str, dict[str, list[str]]]:
    """Load presentation aliases: {language: {code: [alias, ...]}}.

    Aliases are optional display/parsing strings for label verbalizations
    (e.g. localized abbreviations). Codes are validated; languages are not
    restricted so a config may carry extra locales.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CorpusError(f"{path}: top level must be an object")
    out: dict[str, dict[str, list[str]]] = {}
    for lang, table in data.items():
        if not isinstance(table, dict):
            raise CorpusError(f"{path}: entry {lang!r} must be an object")
        out[lang] = {}
        for code, aliases in table.items():
            label = label_from_code(code)
            if not isinstance(aliases, list) or not all(
                isinstance(a, str) for a in aliases
            ):
                raise CorpusError(
                    f"{path}: aliases for {lang}/{code} must be a list of strings"
                )
            out[lang][label.code] = list(aliases)
    return out


def iter_instances(corpora: Iterable[Corpus]) -> Iterable[REInstance]:
    for corpus in corpora:
        yield from corpus.instances
