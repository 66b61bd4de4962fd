"""Contrastive pair mining over multi-channel embedding similarity.

The train-time similarity between two labeled instances is a convex blend of
channel cosines: sentence, the two entity mentions, and the gold relation
label's own embedding. For every anchor, the k highest-scoring other
instances become positives and the k lowest become negatives. Mining is
O(n^2) and fully deterministic (score ties break by ascending instance id),
so pair lists are materialized to JSONL once and reused.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, REInstance
from .embeddings import ChannelView, EmbeddingStore, label_key
from .errors import MiningError

POLARITIES = ("positive", "negative")


@dataclass(frozen=True)
class MiningWeights:
    """Blend weights: alpha terms sum to 1, beta terms sum to 1.

    Defaults weight sentence, entity pair, and relation channels equally and
    the two entities equally within their term.
    """

    alpha1: float = 1.0 / 3.0
    alpha2: float = 1.0 / 3.0
    alpha3: float = 1.0 / 3.0
    beta1: float = 0.5
    beta2: float = 0.5

    def __post_init__(self) -> None:
        weights = (self.alpha1, self.alpha2, self.alpha3, self.beta1, self.beta2)
        if any(w < 0 for w in weights):
            raise MiningError("mining weights must be non-negative")
        if abs(self.alpha1 + self.alpha2 + self.alpha3 - 1.0) > 1e-9:
            raise MiningError("alpha weights must sum to 1 within 1e-9")
        if abs(self.beta1 + self.beta2 - 1.0) > 1e-9:
            raise MiningError("beta weights must sum to 1 within 1e-9")


@dataclass(frozen=True)
class ContrastivePair:
    anchor_id: str
    partner_id: str
    polarity: str
    score: float

    def __post_init__(self) -> None:
        if self.polarity not in POLARITIES:
            raise MiningError(f"polarity {self.polarity!r} not one of {POLARITIES}")
        if self.anchor_id == self.partner_id:
            raise MiningError(f"anchor {self.anchor_id!r} cannot pair with itself")


def blend_train(sentence: float, e1: float, e2: float, relation: float,
                weights: MiningWeights = MiningWeights()) -> float:
    """Weighted train-time combination of the four component cosines."""
    return (weights.alpha1 * sentence
            + weights.alpha2 * (weights.beta1 * e1 + weights.beta2 * e2)
            + weights.alpha3 * relation)


class _SimilarityTable:
    """Cached channel views for scoring instance pairs."""

    def __init__(self, store: EmbeddingStore, weights: MiningWeights):
        self._weights = weights
        self._sentence = ChannelView(store, "sentence")
        self._e1 = ChannelView(store, "e1")
        self._e2 = ChannelView(store, "e2")
        self._relation = ChannelView(store, "relation")

    def score(self, a: REInstance, b: REInstance) -> float:
        return blend_train(
            self._sentence.cos(a.id, b.id),
            self._e1.cos(a.id, b.id),
            self._e2.cos(a.id, b.id),
            self._relation.cos(label_key(a.gold.code), label_key(b.gold.code)),
            self._weights,
        )


def train_similarity(
    a: REInstance,
    b: REInstance,
    store: EmbeddingStore,
    weights: MiningWeights = MiningWeights(),
) -> float:
    """Blended train-time similarity between two labeled instances.

    Relation-channel vectors are looked up under the id "label:<code>".
    Missing channels raise StoreError naming the id and channel.
    """
    return _SimilarityTable(store, weights).score(a, b)


def mine_pairs(
    corpus: Corpus,
    store: EmbeddingStore,
    weights: MiningWeights = MiningWeights(),
    k: int = 5,
    seed: int = 0,
) -> list[ContrastivePair]:
    """Top-k/bottom-k contrastive pairs for every anchor.

    Output is ordered by (anchor id, polarity, rank) with positives first.
    The result only depends on ids and scores, so it is invariant under
    permutations of the input corpus. ``seed`` is accepted for interface
    stability but unused: ties break by ascending id, never randomly.
    """
    del seed
    if k < 1:
        raise MiningError(f"k must be >= 1, got {k}")
    n = len(corpus)
    if n < 2 * k + 1:
        raise MiningError(
            f"corpus has {n} instances; need at least 2k+1 = {2 * k + 1} "
            f"so positives and negatives cannot overlap"
        )
    table = _SimilarityTable(store, weights)
    by_id = {inst.id: inst for inst in corpus.instances}
    ids = sorted(by_id)

    # Symmetric score matrix as a dict over unordered pairs; each pair is
    # scored once, which train_similarity's exact symmetry makes safe.
    scores: dict[tuple[str, str], float] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            scores[(a, b)] = table.score(by_id[a], by_id[b])

    def pair_score(a: str, b: str) -> float:
        return scores[(a, b)] if a < b else scores[(b, a)]

    pairs: list[ContrastivePair] = []
    for anchor in ids:
        others = [other for other in ids if other != anchor]
        ranked = sorted(others, key=lambda other: (-pair_score(anchor, other), other))
        for partner in ranked[:k]:
            pairs.append(ContrastivePair(anchor, partner, "positive",
                                         pair_score(anchor, partner)))
        worst = sorted(others, key=lambda other: (pair_score(anchor, other), other))
        for partner in worst[:k]:
            pairs.append(ContrastivePair(anchor, partner, "negative",
                                         pair_score(anchor, partner)))
    return pairs


def write_pairs(pairs: Sequence[ContrastivePair], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            obj = {"anchor": pair.anchor_id, "partner": pair.partner_id,
                   "polarity": pair.polarity, "score": pair.score}
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def read_pairs(path: str | Path) -> list[ContrastivePair]:
    path = Path(path)
    pairs: list[ContrastivePair] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MiningError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or set(obj) != {"anchor", "partner",
                                                         "polarity", "score"}:
                raise MiningError(
                    f"{path}: line {lineno}: record must have exactly keys "
                    "anchor, partner, polarity, score"
                )
            pairs.append(ContrastivePair(obj["anchor"], obj["partner"],
                                         obj["polarity"], float(obj["score"])))
    return pairs


def group_triplets(
    pairs: Iterable[ContrastivePair],
) -> list[tuple[str, str, str]]:
    """Zip each anchor's rank-i positive with its rank-i negative.

    Returns (anchor, positive, negative) id triples in anchor-id order,
    preserving rank order within an anchor. Uneven positive/negative counts
    zip to the shorter side.
    """
    pos: dict[str, list[str]] = {}
    neg: dict[str, list[str]] = {}
    for pair in pairs:
        bucket = pos if pair.polarity == "positive" else neg
        bucket.setdefault(pair.anchor_id, []).append(pair.partner_id)
    triplets: list[tuple[str, str, str]] = []
    for anchor in sorted(set(pos) | set(neg)):
        for p, n in zip(pos.get(anchor, []), neg.get(anchor, [])):
            triplets.append((anchor, p, n))
    return triplets
