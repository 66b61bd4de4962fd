"""Command-line entry point."""

from __future__ import annotations

import json

from embexport.cli import main

from conftest import instance_dict, write_corpus_file


def test_full_run_writes_store_and_metadata(small_corpus, tmp_path,
                                            tiny_encoder, capsys):
    output = tmp_path / "store.bin"
    code = main([
        "--corpus", str(small_corpus),
        "--output", str(output),
        "--encoder", f"en={tiny_encoder}",
        "--batch-size", "2",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "wrote 24 records" in out
    assert "sha256:" in out
    assert output.exists()
    metadata = json.loads((tmp_path / "store.bin.meta.json").read_text("utf-8"))
    assert metadata["encoder"] == tiny_encoder


def test_channel_subset_flag(small_corpus, tmp_path, tiny_encoder, capsys):
    output = tmp_path / "store.bin"
    code = main([
        "--corpus", str(small_corpus),
        "--output", str(output),
        "--encoder", f"en={tiny_encoder}",
        "--channels", "sentence,e1",
    ])
    assert code == 0
    assert "wrote 8 records" in capsys.readouterr().out


def test_dry_run_writes_nothing(small_corpus, tmp_path, capsys):
    output = tmp_path / "store.bin"
    code = main([
        "--corpus", str(small_corpus),
        "--output", str(output),
        "--dry-run",
    ])
    assert code == 0
    assert "dry run" in capsys.readouterr().out
    assert not output.exists()
    assert not (tmp_path / "store.bin.meta.json").exists()


def test_corpus_error_exits_1(tmp_path, tiny_encoder, capsys):
    record = instance_dict(0, "TrIP")
    record["relation"] = "TrXX"
    corpus = write_corpus_file(tmp_path / "corpus.jsonl", [record])
    code = main([
        "--corpus", str(corpus),
        "--output", str(tmp_path / "store.bin"),
        "--encoder", f"en={tiny_encoder}",
    ])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_export_error_exits_2(small_corpus, tmp_path, capsys):
    code = main([
        "--corpus", str(small_corpus),
        "--output", str(tmp_path / "store.bin"),
        "--encoder", f"tr={tmp_path}",
        "--channels", "sentence",
        "--dry-run",
    ])
    assert code == 0

    code = main([
        "--corpus", str(small_corpus),
        "--output", str(tmp_path / "store.bin"),
        "--channels", "paragraph",
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bad_encoder_override_is_usage_error(small_corpus, tmp_path, capsys):
    code = main([
        "--corpus", str(small_corpus),
        "--output", str(tmp_path / "store.bin"),
        "--encoder", "no-equals-sign",
    ])
    assert code != 0
    capsys.readouterr()


def test_missing_required_flag_exits_1(capsys):
    assert main(["--corpus", "x.jsonl"]) == 1
    capsys.readouterr()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "--channels" in capsys.readouterr().out
