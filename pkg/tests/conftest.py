"""Shared synthetic fixtures: corpora with valid spans, embedding stores."""

from __future__ import annotations

import numpy as np
import pytest

from relaware.corpus import (Corpus, EntityMention, LABEL_CODES, REInstance,
                             label_from_code, write_corpus)
from relaware.embeddings import EmbeddingStore, label_key

BASE_CHANNELS = ("sentence", "e1", "e2")
ALL_INSTANCE_CHANNELS = BASE_CHANNELS + (
    "pure_relation", "ft_sentence", "ft_e1", "ft_e2")


def make_instance(i: int, code: str, lang: str = "en",
                  prefix: str = "x") -> REInstance:
    """One valid instance; entity surfaces and offsets are real slices."""
    if code.startswith("Tr"):
        e1_surface, e1_type = f"drug{i}", "treatment"
    elif code.startswith("Te"):
        e1_surface, e1_type = f"assay{i}", "test"
    else:
        e1_surface, e1_type = f"sign{i}", "problem"
    e2_surface = f"problem{i}"
    sentence = f"{e1_surface} was linked to {e2_surface} in the record."
    e1_start = sentence.index(e1_surface)
    e2_start = sentence.index(e2_surface)
    return REInstance(
        id=f"{prefix}{i:04d}",
        lang=lang,
        sentence=sentence,
        e1=EntityMention(surface=e1_surface, start=e1_start,
                         end=e1_start + len(e1_surface), concept_type=e1_type),
        e2=EntityMention(surface=e2_surface, start=e2_start,
                         end=e2_start + len(e2_surface), concept_type="problem"),
        gold=label_from_code(code),
    )


def make_corpus(n: int, lang: str = "en", split: str = "train",
                prefix: str = "x",
                codes: tuple[str, ...] = LABEL_CODES) -> Corpus:
    """n instances with gold labels assigned round-robin over codes."""
    instances = tuple(
        make_instance(i, codes[i % len(codes)], lang=lang, prefix=prefix)
        for i in range(n)
    )
    return Corpus(split=split, instances=instances)


def make_store(
    corpus: Corpus,
    dim: int = 16,
    seed: int = 0,
    channels: tuple[str, ...] = BASE_CHANNELS,
    label_records: bool = True,
    cluster_by_label: bool = False,
) -> EmbeddingStore:
    """Random float32 vectors per instance and channel, plus label records.

    With cluster_by_label, vectors for a given gold label share a strong
    common component, so nearest neighbours mostly share the label.
    """
    rng = np.random.default_rng(seed)
    bases = {code: rng.standard_normal(dim) for code in LABEL_CODES}
    entries: dict[tuple[str, str], np.ndarray] = {}
    for inst in corpus.instances:
        for channel in channels:
            noise = rng.standard_normal(dim)
            if cluster_by_label:
                vec = 3.0 * bases[inst.gold.code] + noise
            else:
                vec = noise
            entries[(inst.id, channel)] = vec.astype(np.float32)
    if label_records:
        for code in LABEL_CODES:
            entries[(label_key(code), "relation")] = (
                bases[code].astype(np.float32))
    return EmbeddingStore(entries)


@pytest.fixture
def small_corpus() -> Corpus:
    return make_corpus(24)


@pytest.fixture
def small_store(small_corpus: Corpus) -> EmbeddingStore:
    return make_store(small_corpus)


def corpus_file(tmp_path, corpus: Corpus, name: str = "corpus.jsonl") -> str:
    path = tmp_path / name
    write_corpus(corpus, path)
    return str(path)
