"""End-to-end export runs against the tiny local checkpoint."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import pytest

from embexport.errors import ExportError
from embexport.export import DEFAULT_ENCODERS, ExportSpec, export
from embexport.storeio import sha256_file

from conftest import (
    HIDDEN_SIZE,
    MAX_POSITIONS,
    instance_dict,
    parse_store,
    write_corpus_file,
)

METADATA_KEYS = {
    "format", "encoder", "language", "pooling", "entity_mode",
    "channel_dims", "records", "corpus_sha256", "output_sha256",
    "truncated", "truncated_ids",
}


def make_spec(corpus: Path, output: Path, tiny_encoder: str,
              **overrides) -> ExportSpec:
    options = {
        "corpus_path": str(corpus),
        "output_path": str(output),
        "encoders": {"en": tiny_encoder, "tr": tiny_encoder},
        "batch_size": 2,
    }
    options.update(overrides)
    return ExportSpec(**options)


def test_full_export_covers_every_channel(small_corpus, tmp_path,
                                          tiny_encoder):
    output = tmp_path / "store.bin"
    result = export(make_spec(small_corpus, output, tiny_encoder))

    assert result.records == 4 * 4 + 8
    assert result.channel_dims == {
        "sentence": HIDDEN_SIZE,
        "e1": HIDDEN_SIZE,
        "e2": HIDDEN_SIZE,
        "relation": HIDDEN_SIZE,
        "pure_relation": 2 * HIDDEN_SIZE,
    }
    assert result.truncated_ids == ()
    assert result.digest == sha256_file(output)

    parsed = parse_store(output.read_bytes())
    assert len(parsed) == result.records
    keys = [(iid, channel) for iid, channel, _ in parsed]
    assert keys == sorted(keys)
    relation_ids = sorted(iid for iid, channel, _ in parsed
                          if channel == "relation")
    assert relation_ids == sorted(
        f"label:{code}" for code in
        ("TrIP", "TrWP", "TrCP", "TrAP", "TrNAP", "TeRP", "TeCP", "PIP")
    )
    for iid, channel, vals in parsed:
        if channel == "pure_relation":
            assert vals.shape[0] == 2 * HIDDEN_SIZE


def test_metadata_sidecar_is_complete_and_timeless(small_corpus, tmp_path,
                                                   tiny_encoder):
    output = tmp_path / "store.bin"
    result = export(make_spec(small_corpus, output, tiny_encoder))
    metadata_path = Path(result.metadata_path)
    assert metadata_path == tmp_path / "store.bin.meta.json"
    metadata = json.loads(metadata_path.read_text(encoding="utf-8"))

    assert set(metadata) == METADATA_KEYS
    assert metadata["format"] == "RAREMB01"
    assert metadata["encoder"] == tiny_encoder
    assert metadata["language"] == "en"
    assert metadata["pooling"] == "cls_token"
    assert metadata["entity_mode"] == "surface_isolated"
    assert metadata["channel_dims"] == result.channel_dims
    assert metadata["records"] == result.records
    assert metadata["corpus_sha256"] == sha256_file(small_corpus)
    assert metadata["output_sha256"] == result.digest
    assert metadata["truncated"] is False
    assert metadata["truncated_ids"] == []


def test_reexport_is_bit_identical(small_corpus, tmp_path, tiny_encoder):
    first = export(make_spec(small_corpus, tmp_path / "a.bin", tiny_encoder))
    second = export(make_spec(small_corpus, tmp_path / "b.bin", tiny_encoder))
    assert first.digest == second.digest
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    meta_a = (tmp_path / "a.bin.meta.json").read_text(encoding="utf-8")
    meta_b = (tmp_path / "b.bin.meta.json").read_text(encoding="utf-8")
    assert meta_a == meta_b


def test_channel_subset_exports_only_that_subset(small_corpus, tmp_path,
                                                 tiny_encoder):
    output = tmp_path / "store.bin"
    result = export(make_spec(small_corpus, output, tiny_encoder,
                              channels=("relation",)))
    assert result.records == 8
    parsed = parse_store(output.read_bytes())
    assert {channel for _, channel, _ in parsed} == {"relation"}
    assert all(iid.startswith("label:") for iid, _, _ in parsed)


def test_mean_pooling_changes_the_output(small_corpus, tmp_path,
                                         tiny_encoder):
    cls_run = export(make_spec(small_corpus, tmp_path / "a.bin", tiny_encoder,
                               channels=("sentence",)))
    mean_run = export(make_spec(small_corpus, tmp_path / "b.bin", tiny_encoder,
                                channels=("sentence",),
                                pooling="mean_tokens"))
    assert cls_run.digest != mean_run.digest


def test_batch_size_does_not_change_the_bytes(small_corpus, tmp_path,
                                              tiny_encoder):
    one = export(make_spec(small_corpus, tmp_path / "a.bin", tiny_encoder,
                           batch_size=1))
    big = export(make_spec(small_corpus, tmp_path / "b.bin", tiny_encoder,
                           batch_size=64))
    assert one.digest == big.digest


def test_overlong_sentence_is_truncated_and_flagged(tmp_path, tiny_encoder,
                                                    caplog):
    filler = "pain " * (MAX_POSITIONS + 20)
    records = [
        instance_dict(0, "TrIP"),
        instance_dict(1, "TrIP",
                      sentence=f"aspirin eased the headache {filler}."),
    ]
    corpus = write_corpus_file(tmp_path / "corpus.jsonl", records)
    output = tmp_path / "store.bin"
    with caplog.at_level(logging.WARNING, logger="embexport.export"):
        result = export(make_spec(corpus, output, tiny_encoder))
    assert result.truncated_ids == ("inst001",)
    assert any("truncated" in message for message in caplog.messages)
    metadata = json.loads(Path(result.metadata_path).read_text("utf-8"))
    assert metadata["truncated"] is True
    assert metadata["truncated_ids"] == ["inst001"]
    ids = {iid for iid, channel, _ in parse_store(output.read_bytes())
           if channel == "sentence"}
    assert ids == {"inst000", "inst001"}


def test_marker_lost_to_truncation_is_an_error(tmp_path, tiny_encoder):
    filler = "pain " * (MAX_POSITIONS + 20)
    sentence = f"aspirin eased {filler}the headache ."
    records = [instance_dict(0, "TrIP", sentence=sentence)]
    corpus = write_corpus_file(tmp_path / "corpus.jsonl", records)
    spec = make_spec(corpus, tmp_path / "store.bin", tiny_encoder,
                     channels=("pure_relation",))
    with pytest.raises(ExportError, match="inst000"):
        export(spec)
    assert not (tmp_path / "store.bin").exists()


def test_missing_language_encoder_is_an_error(small_corpus, tmp_path,
                                              tiny_encoder):
    spec = make_spec(small_corpus, tmp_path / "store.bin", tiny_encoder,
                     encoders={"tr": tiny_encoder})
    with pytest.raises(ExportError, match="language 'en'"):
        export(spec)


def test_spec_rejects_bad_requests(small_corpus, tmp_path, tiny_encoder):
    common = {"corpus": small_corpus, "output": tmp_path / "s.bin",
              "tiny_encoder": tiny_encoder}
    with pytest.raises(ExportError, match="channels"):
        make_spec(**common, channels=("paragraph",))
    with pytest.raises(ExportError, match="duplicate"):
        make_spec(**common, channels=("e1", "e1"))
    with pytest.raises(ExportError, match="no channels"):
        make_spec(**common, channels=())
    with pytest.raises(ExportError, match="pooling"):
        make_spec(**common, pooling="max_tokens")
    with pytest.raises(ExportError, match="batch_size"):
        make_spec(**common, batch_size=0)


def test_default_encoders_cover_both_languages():
    assert DEFAULT_ENCODERS == {
        "en": "roberta-base",
        "tr": "TURKCELL/roberta-base-turkish-uncased",
    }
