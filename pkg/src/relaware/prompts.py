"""Prompt rendering: task instruction, demonstrations, CoT blocks, test query.

All texts are assembled from template files (one file per block per
language) plus per-style demonstration layouts, and are reproducible byte
for byte: golden-file tests pin the exact output. Entity surfaces are
lowercased inside question lines; surfaces are quoted in the plain and
static styles and unquoted in the dynamic CoT styles.

Layout summary (blocks joined by one blank line):

    task instruction
    [static CoT template          - static_zero_shot and static_few_shot]
    [demonstrations, one block each, least similar first]
    test Context + question + "Response:" stub
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import INVALID, REInstance
from .errors import PromptError

COT_STYLES = ("none", "static_zero_shot", "static_few_shot", "sqp",
              "gold_label", "output_format")

#: Styles whose demonstrations are retrieved per test instance.
DYNAMIC_STYLES = ("sqp", "gold_label", "output_format")

#: Relation phrase used in the output_format Because-clause.
RELATION_PHRASES = {
    "TrIP": "IMPROVES",
    "TrWP": "WORSENS",
    "TrCP": "CAUSES",
    "TrAP": "IS ADMINISTERED FOR",
    "TrNAP": "IS NOT ADMINISTERED BECAUSE OF",
    "TeRP": "REVEALS",
    "TeCP": "IS CONDUCTED TO INVESTIGATE",
    "PIP": "INDICATES",
}

_TEMPLATE_FILES = {
    "task_instruction": "task_instruction.txt",
    "static_cot": "static_cot.txt",
    "sqp_request": "sqp_request.txt",
    "gold_label_request": "gold_label_request.txt",
}

_DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "templates"


@dataclass(frozen=True)
class Demonstration:
    instance: REInstance
    cot_text: str | None
    rendered: str


@dataclass(frozen=True)
class RenderedPrompt:
    full_text: str
    demo_ids: tuple[str, ...]
    style: str
    language: str
    content_hash: str


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _check_style(style: str) -> None:
    if style not in COT_STYLES:
        raise PromptError(f"style {style!r} not one of {COT_STYLES}")


def load_template(name: str, language: str,
                  template_dir: str | Path | None = None) -> str:
    """Read a named block for a language; trailing newlines stripped."""
    if name not in _TEMPLATE_FILES:
        raise PromptError(f"unknown template {name!r}")
    root = Path(template_dir) if template_dir is not None else _DEFAULT_TEMPLATE_DIR
    path = root / language / _TEMPLATE_FILES[name]
    if not path.is_file():
        raise PromptError(
            f"no {name} template for language {language!r}: expected {path}"
        )
    return path.read_text(encoding="utf-8").rstrip("\n")


def render_task_instruction(language: str,
                            template_dir: str | Path | None = None) -> str:
    """The fixed task instruction block for a language, byte-exact."""
    return load_template("task_instruction", language, template_dir)


def _question(inst: REInstance, quoted: bool) -> str:
    e1 = inst.e1.surface.lower()
    e2 = inst.e2.surface.lower()
    if quoted:
        return f'Given the context, what is the relation between "{e1}" and "{e2}"?'
    return f"Given the context, what is the relation between {e1} and {e2}?"


def _relation_statement(inst: REInstance) -> str:
    e1 = inst.e1.surface.lower()
    e2 = inst.e2.surface.lower()
    return (
        f"Given the context, the relation between {e1} and {e2} is "
        f"{inst.gold.verbalization}. It is because:"
    )


def because_clause(inst: REInstance) -> str:
    """Structured explanation line for output_format demonstrations."""
    phrase = RELATION_PHRASES[inst.gold.code]
    e1 = inst.e1.surface.lower()
    e2 = inst.e2.surface.lower()
    return (
        f"Because {inst.e1.concept_type} [{e1}] {phrase} the problem [{e2}]."
    )


def render_demonstration(
    inst: REInstance,
    style: str,
    cot_text: str | None = None,
) -> Demonstration:
    """Render one labeled example in the given style.

    cot_text is required for sqp and gold_label (the generated reasoning),
    optional for static_few_shot (manually written steps), and ignored for
    the remaining styles.
    """
    _check_style(style)
    if style == "static_zero_shot":
        raise PromptError("static_zero_shot prompts carry no demonstrations")
    if style in ("sqp", "gold_label") and not cot_text:
        raise PromptError(f"style {style!r} requires cot_text")
    if inst.gold is INVALID:
        raise PromptError("cannot render a demonstration for the INVALID sentinel")

    sentence = inst.sentence
    verb = inst.gold.verbalization
    if style == "none":
        text = (f"Context: {sentence}\n{_question(inst, quoted=True)}\n\n"
                f"Response: {verb}")
    elif style == "static_few_shot":
        steps = f"{cot_text}\n" if cot_text else ""
        text = (f"Context: {sentence}\n{_question(inst, quoted=True)}\n"
                f"{steps}Response: {verb}")
    elif style == "sqp":
        text = (f"Context: {sentence}\n\n{_relation_statement(inst)}\n\n"
                f"{cot_text}")
    elif style == "gold_label":
        text = (f"Context: {sentence}\n{_relation_statement(inst)}\n"
                f"{cot_text}")
    else:  # output_format
        text = (f"Context: {sentence}\n\n{_question(inst, quoted=False)}\n\n"
                f"Response: {verb}. {because_clause(inst)}")
    return Demonstration(instance=inst, cot_text=cot_text, rendered=text)


def build_cot_request(
    inst: REInstance,
    style: str,
    language: str = "en",
    template_dir: str | Path | None = None,
) -> str:
    """Fill the reasoning-request template for sqp or gold_label.

    Slot substitution is a single pass over the template: slot values are
    inserted verbatim and never re-scanned, so a literal "[relation]" inside
    a filled value survives untouched.
    """
    if style not in ("sqp", "gold_label"):
        raise PromptError(
            f"reasoning requests exist only for sqp and gold_label, not {style!r}"
        )
    template = load_template(f"{style}_request", language, template_dir)
    values = {
        "context": inst.sentence,
        "entity1": inst.e1.surface,
        "entity2": inst.e2.surface,
        "relation": inst.gold.verbalization,
    }
    out: list[str] = []
    index = 0
    while index < len(template):
        next_slot = None
        next_at = len(template)
        for slot in values:
            at = template.find(f"[{slot}]", index)
            if at != -1 and at < next_at:
                next_at = at
                next_slot = slot
        out.append(template[index:next_at])
        if next_slot is None:
            break
        out.append(values[next_slot])
        index = next_at + len(next_slot) + 2
    return "".join(out)


def _test_block(inst: REInstance, style: str) -> str:
    quoted = style in ("none", "static_zero_shot", "static_few_shot")
    return f"Context: {inst.sentence}\n{_question(inst, quoted)}\nResponse:"


def assemble_prompt(
    test: REInstance,
    demos: Sequence[Demonstration],
    style: str,
    language: str = "en",
    template_dir: str | Path | None = None,
    demo_order: str = "ascending",
) -> RenderedPrompt:
    """Join instruction, optional static CoT block, demos, and test query.

    ``demos`` arrive in retrieval rank order (most similar first). With the
    default ascending order they are reversed so the most similar example
    sits adjacent to the test query; "descending" keeps rank order.
    """
    _check_style(style)
    if demo_order not in ("ascending", "descending"):
        raise PromptError(f"demo_order {demo_order!r} not 'ascending' or 'descending'")
    if style == "static_zero_shot" and demos:
        raise PromptError("static_zero_shot prompts carry no demonstrations")
    if style in ("static_few_shot", "sqp", "gold_label", "output_format") and not demos:
        raise PromptError(f"style {style!r} requires at least one demonstration")
    for demo in demos:
        if demo.instance.id == test.id:
            raise PromptError(
                f"test instance {test.id!r} cannot appear among its own demonstrations"
            )

    blocks = [render_task_instruction(language, template_dir)]
    if style in ("static_zero_shot", "static_few_shot"):
        blocks.append(load_template("static_cot", language, template_dir))
    ordered = list(demos)
    if demo_order == "ascending":
        ordered.reverse()
    blocks.extend(demo.rendered for demo in ordered)
    blocks.append(_test_block(test, style))
    full_text = "\n\n".join(blocks)
    return RenderedPrompt(
        full_text=full_text,
        demo_ids=tuple(demo.instance.id for demo in ordered),
        style=style,
        language=language,
        content_hash=content_hash(full_text),
    )


class CoTCache:
    """Content-addressed store of generated reasoning texts.

    Keys digest (instance id, style, generator model). Files are JSON and
    written atomically (temp file + rename), so concurrent writers of the
    same key settle on a complete record.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(instance_id: str, style: str, model: str) -> str:
        raw = "\x00".join((instance_id, style, model)).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, instance_id: str, style: str, model: str) -> str | None:
        path = self._path(self.key(instance_id, style, model))
        if not path.is_file():
            return None
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PromptError(f"corrupt CoT cache entry {path}: {exc}") from exc
        return obj["text"]

    def put(self, instance_id: str, style: str, model: str, text: str) -> None:
        key = self.key(instance_id, style, model)
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {"instance_id": instance_id, "style": style, "model": model,
               "text": text}
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(obj, fh, ensure_ascii=False)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
