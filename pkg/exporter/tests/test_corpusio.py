"""Corpus reader validation."""

from __future__ import annotations

import pytest

from embexport.corpusio import RELATION_VERBALIZATIONS, read_corpus
from embexport.errors import CorpusError

from conftest import instance_dict, write_corpus_file


def test_reads_valid_corpus(small_corpus):
    instances = read_corpus(small_corpus)
    assert [inst.id for inst in instances] == [
        "inst000", "inst001", "inst002", "inst003",
    ]
    first = instances[0]
    assert first.lang == "en"
    assert first.sentence[first.e1.start:first.e1.end] == first.e1.text
    assert first.sentence[first.e2.start:first.e2.end] == first.e2.text
    assert first.relation == "TrIP"


def test_extra_keys_are_tolerated(tmp_path):
    record = instance_dict(0, "PIP")
    record["split"] = "train"
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    assert read_corpus(path)[0].id == "inst000"


def test_missing_key_is_rejected(tmp_path):
    record = instance_dict(0, "PIP")
    del record["sentence"]
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    with pytest.raises(CorpusError, match="sentence"):
        read_corpus(path)


def test_duplicate_id_is_rejected(tmp_path):
    records = [instance_dict(0, "PIP"), instance_dict(0, "TrIP")]
    path = write_corpus_file(tmp_path / "c.jsonl", records)
    with pytest.raises(CorpusError, match="duplicate"):
        read_corpus(path)


def test_reserved_id_prefix_is_rejected(tmp_path):
    record = instance_dict(0, "PIP")
    record["id"] = "label:PIP"
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    with pytest.raises(CorpusError, match="label:"):
        read_corpus(path)


def test_span_text_mismatch_is_rejected(tmp_path):
    record = instance_dict(0, "TrIP")
    record["e1"]["text"] = "ibuprofen"
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    with pytest.raises(CorpusError, match="span"):
        read_corpus(path)


def test_span_out_of_bounds_is_rejected(tmp_path):
    record = instance_dict(0, "TrIP")
    record["e2"]["end"] = len(record["sentence"]) + 5
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    with pytest.raises(CorpusError):
        read_corpus(path)


def test_unknown_relation_is_rejected(tmp_path):
    record = instance_dict(0, "TrIP")
    record["relation"] = "TrXX"
    path = write_corpus_file(tmp_path / "c.jsonl", [record])
    with pytest.raises(CorpusError, match="relation"):
        read_corpus(path)


def test_mixed_languages_are_rejected(tmp_path):
    records = [instance_dict(0, "PIP"), instance_dict(1, "PIP", lang="tr")]
    path = write_corpus_file(tmp_path / "c.jsonl", records)
    with pytest.raises(CorpusError, match="language"):
        read_corpus(path)


def test_empty_corpus_is_rejected(tmp_path):
    path = write_corpus_file(tmp_path / "c.jsonl", [])
    with pytest.raises(CorpusError, match="empty"):
        read_corpus(path)


def test_malformed_json_is_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("{not json}\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 1"):
        read_corpus(path)


def test_verbalization_table_covers_all_labels():
    assert len(RELATION_VERBALIZATIONS) == 8
    assert len(set(RELATION_VERBALIZATIONS.values())) == 8
    assert RELATION_VERBALIZATIONS["PIP"] == (
        "MEDICAL PROBLEM INDICATES MEDICAL PROBLEM"
    )
