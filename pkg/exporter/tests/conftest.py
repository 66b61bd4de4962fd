"""Shared fixtures: a tiny local BERT checkpoint and corpus files."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pytest
import torch

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "of", "for", "to", "in", "was", "is", "not", "and",
    "drug", "aspirin", "dose", "eased", "headache", "nausea", "pain",
    "assay", "panel", "revealed", "anemia", "fever", "rash", "sign",
    "treatment", "improves", "worsens", "causes", "administered",
    "because", "test", "reveals", "conducted", "investigate", "medical",
    "problem", "indicates", "linked", "record", "noted", "with", ".", ",",
]

HIDDEN_SIZE = 16
MAX_POSITIONS = 48


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory) -> str:
    """Save a seeded one-layer BERT plus tokenizer; returns the directory."""
    from transformers import BertConfig, BertModel, BertTokenizerFast

    target = tmp_path_factory.mktemp("tiny-encoder")
    vocab_file = target / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file),
                                  do_lower_case=True)
    tokenizer.save_pretrained(target)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=MAX_POSITIONS,
        pad_token_id=0,
    )
    model = BertModel(config)
    model.eval()
    model.save_pretrained(target)
    return str(target)


def entity_type_for(code: str) -> str:
    if code.startswith("Tr"):
        return "treatment"
    if code.startswith("Te"):
        return "test"
    return "problem"


def instance_dict(i: int, code: str, sentence: str | None = None,
                  e1: str | None = None, e2: str | None = None,
                  lang: str = "en") -> dict:
    """One corpus record as a raw dict; spans are computed from the text."""
    e1 = e1 or "aspirin"
    e2 = e2 or "headache"
    sentence = sentence or f"{e1} eased the {e2} in the record ."
    s1 = sentence.index(e1)
    s2 = sentence.index(e2, s1 + len(e1))
    return {
        "id": f"inst{i:03d}",
        "lang": lang,
        "sentence": sentence,
        "e1": {"text": e1, "start": s1, "end": s1 + len(e1),
               "type": entity_type_for(code)},
        "e2": {"text": e2, "start": s2, "end": s2 + len(e2),
               "type": "problem"},
        "relation": code,
    }


def write_corpus_file(path: Path, records: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")
    return path


@pytest.fixture()
def small_corpus(tmp_path) -> Path:
    codes = ["TrIP", "TrWP", "TeRP", "PIP"]
    records = [instance_dict(i, code) for i, code in enumerate(codes)]
    return write_corpus_file(tmp_path / "corpus.jsonl", records)


def parse_store(raw: bytes) -> list[tuple[str, str, np.ndarray]]:
    """Decode an embedding file straight from the documented byte layout."""
    assert raw[:8] == b"RAREMB01"
    (count,) = struct.unpack_from("<I", raw, 8)
    offset = 12
    records = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        iid = raw[offset:offset + id_len].decode("utf-8")
        offset += id_len
        (ch_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        channel = raw[offset:offset + ch_len].decode("utf-8")
        offset += ch_len
        (dim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        values = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        records.append((iid, channel, values))
    assert offset == len(raw)
    return records
