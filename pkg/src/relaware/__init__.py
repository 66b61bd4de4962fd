"""Relation-aware demonstration retrieval and evaluation for clinical RE.

The package turns a relation-extraction corpus plus precomputed sentence,
entity, and relation embeddings into in-context prompts: it mines
contrastive pairs, trains a small projection head, retrieves demonstrations
with a relation-aware similarity, renders prompts in several reasoning
styles, and scores model responses with micro-F1.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .corpus import (CONCEPT_TYPES, INVALID, LABEL_CODES, LABELS, LANGUAGES,
                     Corpus, EntityMention, REInstance, RelationLabel,
                     label_from_code, load_display_names, parse_corpus,
                     stratified_sample, write_corpus)
from .embeddings import (CHANNELS, ChannelView, EmbeddingStore, cosine,
                         label_key, load_store, write_store)
from .errors import (AuthError, CompletionTimeout, ConfigError, CorpusError,
                     GatewayError, MalformedResponse, MetricsError,
                     MiningError, PromptError, RelawareError, RetrievalError,
                     RetryExhausted, StoreError, TrainingError)
from .gateway import (CompletionCache, CompletionRecord, EndpointConfig,
                      HttpTransport, MockTransport, TokenBucket,
                      complete, complete_batch)
from .mining import (ContrastivePair, MiningWeights, blend_train,
                     group_triplets, mine_pairs, read_pairs,
                     train_similarity, write_pairs)
from .parsing import ParseOutcome, normalize, parse_relation
from .projection import (ProjectionHead, TrainConfig, apply_head, batch_loss,
                         load_head, save_head, train)
from .prompts import (COT_STYLES, RELATION_PHRASES, CoTCache, Demonstration,
                      RenderedPrompt, assemble_prompt, build_cot_request,
                      render_demonstration, render_task_instruction)
from .retrieval import (STRATEGIES, RetrievalQuery, RetrievalResult,
                        RetrievalWeights, blend_test, retrieve,
                        retrieve_batch)
from .evaluation import (ConfusionMatrix, EvalReport, ExperimentSpec,
                         ablate_shots, micro_f1, per_class_stats,
                         run_experiment)

__all__ = [
    "__version__",
    # corpus
    "CONCEPT_TYPES", "INVALID", "LABEL_CODES", "LABELS", "LANGUAGES",
    "Corpus", "EntityMention", "REInstance", "RelationLabel",
    "label_from_code", "load_display_names", "parse_corpus",
    "stratified_sample", "write_corpus",
    # embeddings
    "CHANNELS", "ChannelView", "EmbeddingStore", "cosine", "label_key",
    "load_store", "write_store",
    # errors
    "AuthError", "CompletionTimeout", "ConfigError", "CorpusError",
    "GatewayError", "MalformedResponse", "MetricsError", "MiningError",
    "PromptError", "RelawareError", "RetrievalError", "RetryExhausted",
    "StoreError", "TrainingError",
    # gateway
    "CompletionCache", "CompletionRecord", "EndpointConfig", "HttpTransport",
    "MockTransport", "TokenBucket", "complete", "complete_batch",
    # mining
    "ContrastivePair", "MiningWeights", "blend_train", "group_triplets",
    "mine_pairs", "read_pairs", "train_similarity", "write_pairs",
    # parsing
    "ParseOutcome", "normalize", "parse_relation",
    # projection
    "ProjectionHead", "TrainConfig", "apply_head", "batch_loss", "load_head",
    "save_head", "train",
    # prompts
    "COT_STYLES", "RELATION_PHRASES", "CoTCache", "Demonstration",
    "RenderedPrompt", "assemble_prompt", "build_cot_request",
    "render_demonstration", "render_task_instruction",
    # retrieval
    "STRATEGIES", "RetrievalQuery", "RetrievalResult", "RetrievalWeights",
    "blend_test", "retrieve", "retrieve_batch",
    # evaluation
    "ConfusionMatrix", "EvalReport", "ExperimentSpec", "ablate_shots",
    "micro_f1", "per_class_stats", "run_experiment",
]
