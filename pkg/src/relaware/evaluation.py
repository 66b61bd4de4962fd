"""Experiment orchestration, micro-F1, confusion matrices, shot ablation.

A run walks the test corpus in file order: retrieve k demonstrations per
instance, attach reasoning texts where the style demands, assemble the
prompt, complete it through the gateway, parse the response, and append one
JSONL record. Records are followed by a single {"aggregate": ...} line.
Report files contain no timestamps, latencies, or filesystem paths, so runs
with equal seeds and warm or cold caches are byte-identical; wall-clock
bookkeeping lives in the run manifest sidecar written by the CLI.

Scoring counts every instance: an unparseable response is the INVALID
prediction, a 9th class that is never a gold label. Micro-F1 pools true
positives, false positives, and false negatives over classes, which under
single-label full-coverage prediction equals plain accuracy; micro_f1()
computes the pooled form and asserts the identity.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .corpus import LABEL_CODES, Corpus, REInstance, parse_corpus
from .embeddings import EmbeddingStore
from .errors import ConfigError, GatewayError, MetricsError
from .gateway import (CompletionCache, EndpointConfig, Transport,
                      complete_batch)
from .parsing import parse_relation
from .prompts import (CoTCache, Demonstration, RenderedPrompt,
                      assemble_prompt, build_cot_request,
                      render_demonstration)
from .retrieval import (RetrievalQuery, RetrievalResult, RetrievalWeights,
                        STRATEGIES, retrieve)

GOLD_LABELS: tuple[str, ...] = LABEL_CODES
PREDICTED_LABELS: tuple[str, ...] = LABEL_CODES + ("INVALID",)

#: Cache model key for manually written static few-shot reasoning texts.
MANUAL_COT_MODEL = "manual"

Record = tuple[str, str]  # (gold code, predicted code)


def _check_records(records: Sequence[Record]) -> None:
    if not records:
        raise MetricsError("no records to score")
    for gold, predicted in records:
        if gold not in GOLD_LABELS:
            raise MetricsError(f"gold label {gold!r} not one of the 8 codes")
        if predicted not in PREDICTED_LABELS:
            raise MetricsError(
                f"predicted label {predicted!r} not one of the 8 codes or INVALID"
            )


def micro_f1(records: Sequence[Record]) -> float:
    """Micro-averaged F1 from pooled per-class TP/FP/FN counts.

    Every instance carries exactly one gold label (never INVALID) and one
    prediction, so pooled FP == pooled FN and micro-F1 reduces to
    matches/total; the identity is asserted, not assumed.
    """
    _check_records(records)
    tp = fp = fn = 0
    for cls in PREDICTED_LABELS:
        tp_c = sum(1 for g, p in records if g == cls and p == cls)
        fp_c = sum(1 for g, p in records if p == cls and g != cls)
        fn_c = sum(1 for g, p in records if g == cls and p != cls)
        tp += tp_c
        fp += fp_c
        fn += fn_c
    pooled = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    accuracy = sum(1 for g, p in records if g == p) / len(records)
    if pooled != accuracy:
        raise MetricsError(
            f"micro-F1 {pooled!r} != accuracy {accuracy!r}; single-label "
            f"full-coverage identity violated"
        )
    return pooled


def per_class_stats(records: Sequence[Record]) -> dict[str, dict[str, float]]:
    """Precision/recall/F1/support for each of the 8 gold labels."""
    _check_records(records)
    stats: dict[str, dict[str, float]] = {}
    for cls in GOLD_LABELS:
        tp = sum(1 for g, p in records if g == cls and p == cls)
        fp = sum(1 for g, p in records if p == cls and g != cls)
        fn = sum(1 for g, p in records if g == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        stats[cls] = {"precision": precision, "recall": recall, "f1": f1,
                      "support": float(tp + fn)}
    return stats


@dataclass(frozen=True)
class ConfusionMatrix:
    """8 gold rows by 9 predicted columns in canonical listing order."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(GOLD_LABELS), len(PREDICTED_LABELS)):
            raise MetricsError(
                f"confusion matrix must be {len(GOLD_LABELS)}x"
                f"{len(PREDICTED_LABELS)}, got {counts.shape}"
            )
        if np.any(counts < 0):
            raise MetricsError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_records(cls, records: Sequence[Record]) -> "ConfusionMatrix":
        _check_records(records)
        counts = np.zeros((len(GOLD_LABELS), len(PREDICTED_LABELS)), dtype=np.int64)
        gold_index = {code: i for i, code in enumerate(GOLD_LABELS)}
        pred_index = {code: i for i, code in enumerate(PREDICTED_LABELS)}
        for gold, predicted in records:
            counts[gold_index[gold], pred_index[predicted]] += 1
        return cls(counts)

    def row_sums(self) -> dict[str, int]:
        return {code: int(total)
                for code, total in zip(GOLD_LABELS, self.counts.sum(axis=1))}

    def total(self) -> int:
        return int(self.counts.sum())

    def as_lists(self) -> list[list[int]]:
        return [[int(x) for x in row] for row in self.counts]

    def to_csv(self) -> str:
        lines = ["gold," + ",".join(PREDICTED_LABELS)]
        for code, row in zip(GOLD_LABELS, self.counts):
            lines.append(code + "," + ",".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"


def confusion(records: Sequence[Record]) -> ConfusionMatrix:
    return ConfusionMatrix.from_records(records)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment run needs, minus live resources."""

    train_path: str
    test_path: str
    language: str
    style: str
    strategy: str | None
    k: int
    endpoint: EndpointConfig
    report_path: str
    seed: int = 0
    retrieval_weights: RetrievalWeights = RetrievalWeights()
    demo_order: str = "ascending"
    template_dir: str | None = None
    cot_cache_dir: str | None = None
    completion_cache_dir: str | None = None
    cot_model: str | None = None
    aliases: Mapping[str, Sequence[str]] | None = None
    limit: int | None = None

    def __post_init__(self) -> None:
        if self.style == "static_zero_shot":
            if self.strategy is not None:
                raise ConfigError("static_zero_shot forbids a retrieval strategy")
            if self.k != 0:
                raise ConfigError("static_zero_shot requires k == 0")
            return
        if self.k < 1:
            raise ConfigError(f"style {self.style!r} requires k >= 1")
        if self.style == "static_few_shot":
            if self.strategy not in (None, "random"):
                raise ConfigError(
                    "static_few_shot selects its fixed demonstrations randomly; "
                    "strategy must be omitted or 'random'"
                )
            return
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"style {self.style!r} requires a retrieval strategy, one of "
                f"{STRATEGIES}"
            )


@dataclass
class EvalReport:
    path: Path
    records: list[dict]
    aggregate: dict
    cache_hits: int = 0
    cache_misses: int = 0

    @property
    def micro_f1(self) -> float:
        return self.aggregate["aggregate"]["micro_f1"]

    def scored_records(self) -> list[Record]:
        return [(rec["gold"], rec["predicted"]) for rec in self.records]

    def content_hash(self) -> str:
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


def _instance_seed(run_seed: int, instance_id: str) -> int:
    digest = hashlib.sha256(f"{run_seed}:{instance_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _spec_echo(spec: ExperimentSpec) -> dict:
    # Paths and cache directories are deliberately absent: report bytes must
    # not depend on where artifacts live.
    return {
        "language": spec.language,
        "style": spec.style,
        "strategy": spec.strategy,
        "k": spec.k,
        "seed": spec.seed,
        "demo_order": spec.demo_order,
        "model": spec.endpoint.model_name,
        "temperature": spec.endpoint.temperature,
        "max_output_tokens": spec.endpoint.max_output_tokens,
        "retrieval_weights": {
            "alpha1": spec.retrieval_weights.alpha1,
            "alpha2": spec.retrieval_weights.alpha2,
            "beta1": spec.retrieval_weights.beta1,
            "beta2": spec.retrieval_weights.beta2,
        },
    }


def _aggregate_block(records: list[dict], spec: ExperimentSpec) -> dict:
    scored = [(rec["gold"], rec["predicted"]) for rec in records]
    matrix = ConfusionMatrix.from_records(scored)
    return {
        "aggregate": {
            "count": len(records),
            "micro_f1": micro_f1(scored),
            "per_class": per_class_stats(scored),
            "confusion": {
                "gold_labels": list(GOLD_LABELS),
                "predicted_labels": list(PREDICTED_LABELS),
                "counts": matrix.as_lists(),
            },
            "spec": _spec_echo(spec),
            "version": __version__,
        }
    }


def _read_report_lines(path: Path) -> tuple[list[dict], dict | None]:
    records: list[dict] = []
    aggregate: dict | None = None
    if not path.is_file():
        return records, aggregate
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{path}: line {lineno}: corrupt report line: {exc}"
                ) from exc
            if "aggregate" in obj:
                aggregate = obj
            else:
                records.append(obj)
    return records, aggregate


def _static_demos(
    pool: Corpus, spec: ExperimentSpec, cot_cache: CoTCache | None
) -> list[Demonstration]:
    rng = random.Random(spec.seed)
    ids = sorted(inst.id for inst in pool.instances)
    picked = rng.sample(ids, spec.k)
    demos = []
    for iid in picked:
        inst = pool.by_id(iid)
        cot_text = None
        if cot_cache is not None:
            cot_text = cot_cache.get(inst.id, "static_few_shot", MANUAL_COT_MODEL)
        demos.append(render_demonstration(inst, "static_few_shot", cot_text))
    return demos


def _ensure_cot_texts(
    demo_instances: list[REInstance],
    spec: ExperimentSpec,
    cot_cache: CoTCache,
    transport: Transport | None,
    completion_cache: CompletionCache | None,
) -> dict[str, str]:
    """Reasoning text per demo id for sqp/gold_label, generating misses."""
    model = spec.cot_model or spec.endpoint.model_name
    texts: dict[str, str] = {}
    missing: list[REInstance] = []
    seen: set[str] = set()
    for inst in demo_instances:
        if inst.id in seen:
            continue
        seen.add(inst.id)
        cached = cot_cache.get(inst.id, spec.style, model)
        if cached is None:
            missing.append(inst)
        else:
            texts[inst.id] = cached
    if missing:
        requests = [
            build_cot_request(inst, spec.style, spec.language, spec.template_dir)
            for inst in missing
        ]
        results = complete_batch(spec.endpoint, requests, transport=transport,
                                 cache=completion_cache)
        for inst, result in zip(missing, results):
            if isinstance(result, GatewayError):
                raise result
            cot_cache.put(inst.id, spec.style, model, result.response_text)
            texts[inst.id] = result.response_text
    return texts


def _build_demos(
    test_instances: list[REInstance],
    pool: Corpus,
    store: EmbeddingStore | None,
    spec: ExperimentSpec,
    cot_cache: CoTCache | None,
    transport: Transport | None,
    completion_cache: CompletionCache | None,
) -> dict[str, list[Demonstration]]:
    """Demonstrations per test id, already rendered in retrieval rank order."""
    if spec.style == "static_zero_shot":
        return {inst.id: [] for inst in test_instances}
    if spec.style == "static_few_shot":
        fixed = _static_demos(pool, spec, cot_cache)
        return {inst.id: fixed for inst in test_instances}

    results: dict[str, RetrievalResult] = {}
    for inst in test_instances:
        query = RetrievalQuery(
            instance=inst, pool=pool, k=spec.k, strategy=spec.strategy,
            seed=_instance_seed(spec.seed, inst.id),
        )
        results[inst.id] = retrieve(query, store, spec.retrieval_weights)

    cot_texts: dict[str, str] = {}
    if spec.style in ("sqp", "gold_label"):
        if cot_cache is None:
            raise ConfigError(
                f"style {spec.style!r} generates reasoning per demonstration; "
                f"configure a CoT cache directory"
            )
        needed_ids = sorted({iid for res in results.values() for iid in res.ids()})
        needed = [pool.by_id(iid) for iid in needed_ids]
        cot_texts = _ensure_cot_texts(needed, spec, cot_cache, transport,
                                      completion_cache)

    demos: dict[str, list[Demonstration]] = {}
    for inst in test_instances:
        rendered = []
        for iid in results[inst.id].ids():
            demo_inst = pool.by_id(iid)
            rendered.append(render_demonstration(
                demo_inst, spec.style, cot_texts.get(iid)))
        demos[inst.id] = rendered
    return demos


def render_prompt_for(
    spec: ExperimentSpec,
    instance_id: str,
    store: EmbeddingStore | None = None,
    transport: Transport | None = None,
) -> RenderedPrompt:
    """Assemble the exact prompt one test instance would receive in a run.

    Demonstration reasoning texts come from the CoT cache, generated through
    the gateway on a miss, so the bytes match what run_experiment sends.
    """
    pool = parse_corpus(spec.train_path, spec.language, split="train")
    test = parse_corpus(spec.test_path, spec.language, split="test")
    instance = test.by_id(instance_id)
    cot_cache = CoTCache(spec.cot_cache_dir) if spec.cot_cache_dir else None
    completion_cache = (CompletionCache(spec.completion_cache_dir)
                        if spec.completion_cache_dir else None)
    demos = _build_demos([instance], pool, store, spec, cot_cache, transport,
                         completion_cache)
    return assemble_prompt(instance, demos[instance.id], spec.style,
                           spec.language, spec.template_dir, spec.demo_order)


def generate_cot_texts(
    spec: ExperimentSpec,
    transport: Transport | None = None,
    limit: int | None = None,
) -> dict[str, str]:
    """Precompute reasoning texts for the demonstration pool.

    Walks the training corpus in file order, fills the CoT cache for the
    spec's style, and returns instance id -> text. Only the reasoning
    styles that quote generated text per demonstration are eligible.
    """
    if spec.style not in ("sqp", "gold_label"):
        raise ConfigError(
            f"style {spec.style!r} does not use generated reasoning texts"
        )
    if spec.cot_cache_dir is None:
        raise ConfigError("configure a CoT cache directory first")
    pool = parse_corpus(spec.train_path, spec.language, split="train")
    instances = list(pool.instances)
    if limit is not None:
        instances = instances[:limit]
    cot_cache = CoTCache(spec.cot_cache_dir)
    completion_cache = (CompletionCache(spec.completion_cache_dir)
                        if spec.completion_cache_dir else None)
    return _ensure_cot_texts(instances, spec, cot_cache, transport,
                             completion_cache)


def run_experiment(
    spec: ExperimentSpec,
    store: EmbeddingStore | None = None,
    transport: Transport | None = None,
) -> EvalReport:
    """Execute one experiment; fully resumable via the report file.

    Instances already present in the report are skipped. Records are
    appended in test-corpus order, then a single aggregate line. Gateway
    failures on one instance record predicted INVALID with an error
    annotation; only configuration problems abort the run.
    """
    pool = parse_corpus(spec.train_path, spec.language, split="train")
    test = parse_corpus(spec.test_path, spec.language, split="test")
    test_instances = list(test.instances)
    if spec.limit is not None:
        test_instances = test_instances[: spec.limit]
    if not test_instances:
        raise ConfigError("test corpus is empty")

    report_path = Path(spec.report_path)
    existing, existing_aggregate = _read_report_lines(report_path)
    done = {rec["id"] for rec in existing}
    pending = [inst for inst in test_instances if inst.id not in done]

    cot_cache = CoTCache(spec.cot_cache_dir) if spec.cot_cache_dir else None
    completion_cache = (CompletionCache(spec.completion_cache_dir)
                        if spec.completion_cache_dir else None)

    new_records: list[dict] = []
    if pending:
        demos = _build_demos(pending, pool, store, spec, cot_cache, transport,
                             completion_cache)
        prompts: list[RenderedPrompt] = []
        for inst in pending:
            prompts.append(assemble_prompt(
                inst, demos[inst.id], spec.style, spec.language,
                spec.template_dir, spec.demo_order,
            ))
        completions = complete_batch(spec.endpoint, prompts,
                                     transport=transport,
                                     cache=completion_cache)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        with report_path.open("a", encoding="utf-8") as fh:
            for inst, prompt, completion in zip(pending, prompts, completions):
                if isinstance(completion, GatewayError):
                    predicted, rule = "INVALID", "none"
                    error: str | None = str(completion)
                else:
                    outcome = parse_relation(completion.response_text, spec.aliases)
                    predicted, rule = outcome.label.code, outcome.rule
                    error = None
                record = {
                    "id": inst.id,
                    "gold": inst.gold.code,
                    "predicted": predicted,
                    "rule": rule,
                    "prompt_hash": prompt.content_hash,
                    "demo_ids": list(prompt.demo_ids),
                    "error": error,
                }
                fh.write(json.dumps(record, ensure_ascii=False,
                                    separators=(",", ":")))
                fh.write("\n")
                fh.flush()
                new_records.append(record)

    all_records = existing + new_records
    aggregate = _aggregate_block(all_records, spec)
    if existing_aggregate is None:
        with report_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(aggregate, ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")
    elif existing_aggregate != aggregate:
        raise ConfigError(
            f"{report_path}: existing aggregate disagrees with recomputation; "
            f"the report mixes incompatible runs"
        )
    return EvalReport(path=report_path, records=all_records, aggregate=aggregate)


def ablate_shots(
    spec: ExperimentSpec,
    shots: Sequence[int] = (5, 10, 15),
    store: EmbeddingStore | None = None,
    transport: Transport | None = None,
) -> list[dict]:
    """run_experiment per shot count, sharing caches; one row per count."""
    if spec.style == "static_zero_shot":
        raise ConfigError("shot ablation needs a few-shot configuration")
    rows = []
    base = Path(spec.report_path)
    for k in shots:
        shot_path = base.with_name(f"{base.stem}_k{k}{base.suffix}")
        shot_spec = replace(spec, k=k, report_path=str(shot_path))
        report = run_experiment(shot_spec, store=store, transport=transport)
        rows.append({"shots": k, "micro_f1": report.micro_f1,
                     "report": str(shot_path)})
    return rows


def report_markdown(report: EvalReport) -> str:
    """One-row Markdown summary table for a finished run."""
    spec = report.aggregate["aggregate"]["spec"]
    agg = report.aggregate["aggregate"]
    lines = [
        "| language | strategy | style | k | instances | micro-F1 |",
        "| --- | --- | --- | --- | --- | --- |",
        (f"| {spec['language']} | {spec['strategy'] or '-'} | {spec['style']} "
         f"| {spec['k']} | {agg['count']} | {agg['micro_f1']:.4f} |"),
    ]
    return "\n".join(lines) + "\n"


def ablation_markdown(rows: Sequence[dict]) -> str:
    lines = ["| shots | micro-F1 |", "| --- | --- |"]
    for row in rows:
        lines.append(f"| {row['shots']} | {row['micro_f1']:.4f} |")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    spec = report.aggregate["aggregate"]["spec"]
    agg = report.aggregate["aggregate"]
    header = "language,strategy,style,k,instances,micro_f1"
    row = (f"{spec['language']},{spec['strategy'] or ''},{spec['style']},"
           f"{spec['k']},{agg['count']},{agg['micro_f1']}")
    return header + "\n" + row + "\n"


def confusion_from_report(report: EvalReport) -> ConfusionMatrix:
    return ConfusionMatrix.from_records(report.scored_records())
