"""Demonstration retrieval strategies over a candidate pool.

Four strategies rank pool instances for a test query: seeded random, plain
sentence-cosine nearest neighbours, nearest neighbours over entity-marker
"pure relation" vectors, and a weighted blend over fine-tuned channels that
omits the relation term (the gold label of a test instance is unknown).
Ranking is deterministic: scores sort descending with ties broken by
ascending instance id, and a query id present in the pool is excluded before
ranking so no instance can retrieve itself.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import Corpus, REInstance
from .embeddings import ChannelView, EmbeddingStore
from .errors import RetrievalError

STRATEGIES = ("random", "kate", "ftrr", "rar")


@dataclass(frozen=True)
class RetrievalWeights:
    """Test-time blend weights; each pair sums to 1 within 1e-9."""

    alpha1: float = 0.5
    alpha2: float = 0.5
    beta1: float = 0.5
    beta2: float = 0.5

    def __post_init__(self) -> None:
        weights = (self.alpha1, self.alpha2, self.beta1, self.beta2)
        if any(w < 0 for w in weights):
            raise RetrievalError("retrieval weights must be non-negative")
        if abs(self.alpha1 + self.alpha2 - 1.0) > 1e-9:
            raise RetrievalError("alpha weights must sum to 1 within 1e-9")
        if abs(self.beta1 + self.beta2 - 1.0) > 1e-9:
            raise RetrievalError("beta weights must sum to 1 within 1e-9")


@dataclass(frozen=True)
class RetrievalQuery:
    instance: REInstance
    pool: Corpus
    k: int
    strategy: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise RetrievalError(
                f"strategy {self.strategy!r} not one of {STRATEGIES}"
            )


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    strategy: str
    demos: tuple[tuple[str, float], ...]

    def ids(self) -> list[str]:
        return [iid for iid, _ in self.demos]


def _candidate_ids(query: RetrievalQuery) -> list[str]:
    ids = sorted(
        inst.id for inst in query.pool.instances if inst.id != query.instance.id
    )
    if not 1 <= query.k <= len(ids):
        raise RetrievalError(
            f"k={query.k} outside [1, {len(ids)}] for query {query.instance.id!r} "
            f"(pool of {len(query.pool)} after self-exclusion)"
        )
    return ids


def _rank(candidates: Sequence[str], score: dict[str, float], k: int
          ) -> tuple[tuple[str, float], ...]:
    ordered = sorted(candidates, key=lambda iid: (-score[iid], iid))
    return tuple((iid, score[iid]) for iid in ordered[:k])


def retrieve_random(query: RetrievalQuery) -> RetrievalResult:
    """Seeded uniform sample without replacement; scores are all zero."""
    candidates = _candidate_ids(query)
    rng = random.Random(query.seed)
    picked = rng.sample(candidates, query.k)
    return RetrievalResult(query.instance.id, "random",
                           tuple((iid, 0.0) for iid in picked))


def retrieve_kate(query: RetrievalQuery, store: EmbeddingStore) -> RetrievalResult:
    """Nearest neighbours by sentence-channel cosine."""
    candidates = _candidate_ids(query)
    view = ChannelView(store, "sentence")
    scores = {iid: view.cos(query.instance.id, iid) for iid in candidates}
    return RetrievalResult(query.instance.id, "kate",
                           _rank(candidates, scores, query.k))


def retrieve_ftrr(query: RetrievalQuery, store: EmbeddingStore) -> RetrievalResult:
    """Nearest neighbours by entity-marker pure_relation cosine."""
    candidates = _candidate_ids(query)
    if "pure_relation" not in store.channel_dims:
        raise RetrievalError(
            "store has no pure_relation channel; export entity-marker vectors "
            "for this corpus first"
        )
    view = ChannelView(store, "pure_relation")
    scores = {iid: view.cos(query.instance.id, iid) for iid in candidates}
    return RetrievalResult(query.instance.id, "ftrr",
                           _rank(candidates, scores, query.k))


def blend_test(sentence: float, e1: float, e2: float,
               weights: RetrievalWeights = RetrievalWeights()) -> float:
    """Weighted test-time combination of the three component cosines.

    No relation term: the query's gold label is unknown at test time.
    """
    return (weights.alpha1 * sentence
            + weights.alpha2 * (weights.beta1 * e1 + weights.beta2 * e2))


def retrieve_rar(
    query: RetrievalQuery,
    store: EmbeddingStore,
    weights: RetrievalWeights = RetrievalWeights(),
) -> RetrievalResult:
    """Weighted blend over fine-tuned sentence and entity channels.

    score = alpha1 cos(ft_sentence) + alpha2 (beta1 cos(ft_e1) +
    beta2 cos(ft_e2)).
    """
    candidates = _candidate_ids(query)
    dims = store.channel_dims
    missing = [ch for ch in ("ft_sentence", "ft_e1", "ft_e2") if ch not in dims]
    if missing:
        raise RetrievalError(
            f"store lacks fine-tuned channels {missing}; train a projection "
            f"head and apply it to the base store first"
        )
    sent = ChannelView(store, "ft_sentence")
    ent1 = ChannelView(store, "ft_e1")
    ent2 = ChannelView(store, "ft_e2")
    qid = query.instance.id
    scores = {
        iid: blend_test(sent.cos(qid, iid), ent1.cos(qid, iid),
                        ent2.cos(qid, iid), weights)
        for iid in candidates
    }
    return RetrievalResult(qid, "rar", _rank(candidates, scores, query.k))


def retrieve(
    query: RetrievalQuery,
    store: EmbeddingStore | None = None,
    weights: RetrievalWeights = RetrievalWeights(),
) -> RetrievalResult:
    """Dispatch on query.strategy; non-random strategies need a store."""
    if query.strategy == "random":
        return retrieve_random(query)
    if store is None:
        raise RetrievalError(f"strategy {query.strategy!r} requires an embedding store")
    if query.strategy == "kate":
        return retrieve_kate(query, store)
    if query.strategy == "ftrr":
        return retrieve_ftrr(query, store)
    return retrieve_rar(query, store, weights)


def retrieve_batch(
    queries: Sequence[RetrievalQuery],
    store: EmbeddingStore | None = None,
    weights: RetrievalWeights = RetrievalWeights(),
    max_workers: int = 4,
) -> list[RetrievalResult]:
    """Fan queries out over a bounded thread pool; results keep input order."""
    if max_workers < 1:
        raise RetrievalError("max_workers must be >= 1")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda q: retrieve(q, store, weights), queries))


def write_results(results: Sequence[RetrievalResult], path: str | Path,
                  k: int | None = None) -> None:
    """Dump results as JSONL: {"query", "strategy", "k", "demos": [...]}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            obj = {
                "query": result.query_id,
                "strategy": result.strategy,
                "k": len(result.demos) if k is None else k,
                "demos": [{"id": iid, "score": score} for iid, score in result.demos],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
