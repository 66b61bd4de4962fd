"""Command-line front end mirroring ExportSpec."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .encoder import POOLING_MODES
from .errors import CorpusError, ExportError
from .export import DEFAULT_ENCODERS, EXPORTABLE_CHANNELS, ExportSpec, export


def _parse_encoder_overrides(items: Sequence[str]) -> dict[str, str]:
    encoders = dict(DEFAULT_ENCODERS)
    for item in items:
        lang, sep, model_id = item.partition("=")
        if not sep or not lang or not model_id:
            raise ExportError(
                f"--encoder expects LANG=MODEL_ID, got {item!r}")
        encoders[lang] = model_id
    return encoders


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="export frozen-encoder embeddings to a RAREMB01 file",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSONL path")
    parser.add_argument("--output", required=True, help="embedding file path")
    parser.add_argument(
        "--encoder", action="append", default=[], metavar="LANG=MODEL_ID",
        help="override the encoder for a language (repeatable); defaults: "
             + ", ".join(f"{k}={v}" for k, v in DEFAULT_ENCODERS.items()))
    parser.add_argument(
        "--channels", default=",".join(EXPORTABLE_CHANNELS),
        help="comma-separated channels to export "
             f"(default: {','.join(EXPORTABLE_CHANNELS)})")
    parser.add_argument("--pooling", choices=POOLING_MODES,
                        default="cls_token")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--dry-run", action="store_true",
                        help="print the plan without loading the encoder "
                             "or writing files")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        spec = ExportSpec(
            corpus_path=args.corpus,
            output_path=args.output,
            encoders=_parse_encoder_overrides(args.encoder),
            channels=tuple(ch for ch in args.channels.split(",") if ch),
            pooling=args.pooling,
            batch_size=args.batch_size,
            device=args.device,
        )
        if args.dry_run:
            print("dry run; would do:")
            print(f"  - read {spec.corpus_path}")
            print(f"  - encode channels {', '.join(spec.channels)} with "
                  f"pooling={spec.pooling}, batch_size={spec.batch_size}, "
                  f"device={spec.device}")
            print(f"  - write {spec.output_path} and a .meta.json sidecar")
            return 0
        result = export(spec)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    dims = ", ".join(f"{ch}={dim}" for ch, dim in
                     sorted(result.channel_dims.items()))
    print(f"wrote {result.records} records to {result.output_path} ({dims})")
    print(f"metadata: {result.metadata_path}")
    print(f"sha256: {result.digest}")
    if result.truncated_ids:
        print(f"truncated {len(result.truncated_ids)} inputs; see metadata")
    return 0


if __name__ == "__main__":
    sys.exit(main())
