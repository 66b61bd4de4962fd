"""Command-line entry points.

Subcommands cover the whole pipeline: corpus validation and sampling,
embedding import, contrastive pair mining, projection-head training and
application, demonstration retrieval, prompt rendering, reasoning-text
generation, experiment runs, shot ablation, and report emission.

Exit codes: 0 on success, 1 for usage and input validation problems, 2 for
runtime failures (gateway, training, anything unexpected). Commands that
write artifacts also write a <artifact>.manifest.json sidecar and honor
--dry-run, which prints the plan without writing or touching the network.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import NoReturn

from . import __version__
from .config import (RunManifest, endpoint_from_config, experiment_from_config,
                     load_config, mining_weights_from_config,
                     train_config_from_config)
from .corpus import LANGUAGES, SPLITS, parse_corpus, stratified_sample, write_corpus
from .embeddings import load_store, write_store
from .errors import (ConfigError, CorpusError, GatewayError, MetricsError,
                     MiningError, PromptError, RetrievalError, StoreError,
                     TrainingError)
from .evaluation import (ablate_shots, ablation_markdown, confusion,
                         generate_cot_texts, render_prompt_for,
                         report_csv, report_markdown, run_experiment,
                         _read_report_lines, EvalReport)
from .mining import MiningWeights, mine_pairs, read_pairs, write_pairs
from .projection import apply_head, load_head, save_head, train
from .retrieval import (STRATEGIES, RetrievalQuery, RetrievalWeights,
                        retrieve_batch, write_results)

_VALIDATION_ERRORS = (CorpusError, ConfigError, StoreError, PromptError,
                      RetrievalError, MiningError, MetricsError,
                      FileNotFoundError)
_RUNTIME_ERRORS = (GatewayError, TrainingError)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per our contract."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        out = Path(output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _plan(lines: list[str]) -> int:
    print("dry run; would do:")
    for line in lines:
        print(f"  - {line}")
    return 0


def _start_manifest(command: str, args_snapshot: dict) -> RunManifest:
    manifest = RunManifest(command=command, config=args_snapshot)
    manifest.started_at = RunManifest.now()
    return manifest


def _finish_manifest(manifest: RunManifest, artifact: str) -> None:
    manifest.finished_at = RunManifest.now()
    manifest.write(artifact)


def _cmd_corpus_validate(args: argparse.Namespace) -> int:
    corpus = parse_corpus(args.corpus, args.language, split=args.split)
    print(f"OK: {len(corpus)} instances, language={args.language}, "
          f"split={args.split}")
    for code, count in corpus.label_histogram.items():
        print(f"  {code}: {count}")
    return 0


def _cmd_corpus_sample(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _plan([
            f"parse {args.corpus} as language={args.language}",
            f"draw a stratified sample of {args.n} with seed {args.seed}",
            f"write the sample to {args.output}",
        ])
    corpus = parse_corpus(args.corpus, args.language, split=args.split)
    manifest = _start_manifest("corpus sample", {
        "corpus": args.corpus, "language": args.language, "n": args.n,
        "split": args.split,
    })
    manifest.add_input(args.corpus)
    manifest.seeds["sample"] = args.seed
    sample = stratified_sample(corpus, args.n, args.seed)
    write_corpus(sample, args.output)
    _finish_manifest(manifest, args.output)
    print(f"wrote {len(sample)} instances to {args.output}")
    return 0


def _cmd_embed_import(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _plan([
            f"load the embedding store at {args.input}",
            f"write it to {args.output} as {args.format}",
        ])
    store = load_store(args.input)
    manifest = _start_manifest("embed import", {
        "input": args.input, "format": args.format,
    })
    manifest.add_input(args.input)
    write_store(store, args.output, fmt=args.format)
    _finish_manifest(manifest, args.output)
    dims = ", ".join(f"{ch}={dim}" for ch, dim in sorted(store.channel_dims.items()))
    print(f"wrote {len(store)} records to {args.output} ({dims})")
    return 0


def _mining_weights(args: argparse.Namespace) -> MiningWeights:
    defaults = MiningWeights()
    return MiningWeights(
        alpha1=args.alpha1 if args.alpha1 is not None else defaults.alpha1,
        alpha2=args.alpha2 if args.alpha2 is not None else defaults.alpha2,
        alpha3=args.alpha3 if args.alpha3 is not None else defaults.alpha3,
        beta1=args.beta1 if args.beta1 is not None else defaults.beta1,
        beta2=args.beta2 if args.beta2 is not None else defaults.beta2,
    )


def _cmd_pairs_mine(args: argparse.Namespace) -> int:
    weights = _mining_weights(args)
    if args.dry_run:
        return _plan([
            f"parse {args.corpus} as language={args.language}",
            f"load the embedding store at {args.store}",
            f"mine top/bottom {args.k} pairs per anchor",
            f"write pairs to {args.output}",
        ])
    corpus = parse_corpus(args.corpus, args.language, split=args.split)
    store = load_store(args.store)
    manifest = _start_manifest("pairs mine", {
        "corpus": args.corpus, "language": args.language, "k": args.k,
        "weights": asdict(weights),
    })
    manifest.add_input(args.corpus)
    manifest.add_input(args.store)
    manifest.seeds["mine"] = args.seed
    pairs = mine_pairs(corpus, store, weights, k=args.k, seed=args.seed)
    write_pairs(pairs, args.output)
    _finish_manifest(manifest, args.output)
    print(f"wrote {len(pairs)} pairs to {args.output}")
    return 0


def _cmd_head_train(args: argparse.Namespace) -> int:
    cfg_dict: dict = {}
    if args.config is not None:
        cfg_dict = load_config(args.config)
    cfg = train_config_from_config(cfg_dict, seed=args.seed)
    init_seed = args.init_seed if args.init_seed is not None else cfg.seed
    if args.dry_run:
        return _plan([
            f"read mined pairs from {args.pairs}",
            f"load the embedding store at {args.store}",
            (f"train a projection head: epochs={cfg.epochs}, "
             f"lr={cfg.learning_rate}, batch={cfg.batch_size}, "
             f"tau={cfg.temperature}, mode={cfg.negative_mode}, "
             f"seed={cfg.seed}, init_seed={init_seed}"),
            f"save the head and loss trace to {args.output}",
        ])
    pairs = read_pairs(args.pairs)
    store = load_store(args.store)
    manifest = _start_manifest("head train", {
        "pairs": args.pairs, "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size,
        "temperature": cfg.temperature, "negative_mode": cfg.negative_mode,
    })
    manifest.add_input(args.pairs)
    manifest.add_input(args.store)
    manifest.seeds["train"] = cfg.seed
    manifest.seeds["init"] = init_seed
    head, trace = train(pairs, store, cfg, init_seed)
    save_head(head, args.output, cfg=cfg, trace=trace, init_seed=init_seed)
    _finish_manifest(manifest, args.output)
    losses = ", ".join(f"{x:.6f}" for x in trace)
    print(f"trained head (dim {head.dim}); epoch losses: {losses}")
    print(f"saved to {args.output}")
    return 0


def _cmd_head_apply(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _plan([
            f"load the head at {args.head}",
            f"load the embedding store at {args.store}",
            f"write the extended store to {args.output} as {args.format}",
        ])
    head, _, _ = load_head(args.head)
    store = load_store(args.store)
    manifest = _start_manifest("head apply", {
        "head": args.head, "format": args.format,
    })
    manifest.add_input(args.head)
    manifest.add_input(args.store)
    extended = apply_head(head, store)
    write_store(extended, args.output, fmt=args.format)
    _finish_manifest(manifest, args.output)
    print(f"wrote {len(extended)} records to {args.output}")
    return 0


def _retrieval_weights(args: argparse.Namespace) -> RetrievalWeights:
    defaults = RetrievalWeights()
    return RetrievalWeights(
        alpha1=args.alpha1 if args.alpha1 is not None else defaults.alpha1,
        alpha2=args.alpha2 if args.alpha2 is not None else defaults.alpha2,
        beta1=args.beta1 if args.beta1 is not None else defaults.beta1,
        beta2=args.beta2 if args.beta2 is not None else defaults.beta2,
    )


def _cmd_retrieve(args: argparse.Namespace) -> int:
    weights = _retrieval_weights(args)
    if args.dry_run:
        return _plan([
            f"parse the pool {args.pool} and queries {args.queries}",
            f"load the embedding store at {args.store}" if args.store
            else "run without an embedding store (random strategy only)",
            f"retrieve {args.k} demonstrations per query via {args.strategy}",
            f"write results to {args.output}",
        ])
    pool = parse_corpus(args.pool, args.language, split="train")
    queries_corpus = parse_corpus(args.queries, args.language, split="test")
    store = load_store(args.store) if args.store else None
    manifest = _start_manifest("retrieve", {
        "pool": args.pool, "queries": args.queries, "strategy": args.strategy,
        "k": args.k,
    })
    manifest.add_input(args.pool)
    manifest.add_input(args.queries)
    if args.store:
        manifest.add_input(args.store)
    manifest.seeds["retrieve"] = args.seed
    queries = [
        RetrievalQuery(instance=inst, pool=pool, k=args.k,
                       strategy=args.strategy, seed=args.seed)
        for inst in queries_corpus.instances
    ]
    results = retrieve_batch(queries, store, weights)
    write_results(results, args.output, k=args.k)
    _finish_manifest(manifest, args.output)
    print(f"wrote {len(results)} retrievals to {args.output}")
    return 0


def _cmd_prompt_render(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    spec, paths = experiment_from_config(
        cfg, Path(args.config).parent, seed=args.seed)
    if args.dry_run:
        return _plan([
            f"parse {paths.train} and {paths.test}",
            (f"retrieve {spec.k} demonstrations for {args.id} via "
             f"{spec.strategy or 'none'}"),
            f"assemble a {spec.style} prompt",
            f"print it to {'stdout' if args.output is None else args.output}",
        ])
    store = load_store(paths.store) if paths.store else None
    prompt = render_prompt_for(spec, args.id, store)
    _emit(prompt.full_text + "\n", args.output)
    return 0


def _cmd_cot_generate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    spec, paths = experiment_from_config(
        cfg, Path(args.config).parent, seed=args.seed, limit=args.limit)
    if args.dry_run:
        scope = "all pool instances" if args.limit is None \
            else f"the first {args.limit} pool instances"
        return _plan([
            f"parse {paths.train}",
            f"generate {spec.style} reasoning texts for {scope} "
            f"via {spec.endpoint.model_name}",
            f"store them under {spec.cot_cache_dir}",
        ])
    texts = generate_cot_texts(spec, limit=args.limit)
    print(f"cached {len(texts)} reasoning texts under {spec.cot_cache_dir}")
    return 0


def _cmd_eval_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    spec, paths = experiment_from_config(
        cfg, Path(args.config).parent, seed=args.seed, limit=args.limit,
        report_path=args.report)
    if args.dry_run:
        return _plan([
            f"parse {paths.train} and {paths.test}",
            (f"evaluate style={spec.style}, strategy={spec.strategy or '-'}, "
             f"k={spec.k}, seed={spec.seed} via {spec.endpoint.model_name}"),
            f"append records and an aggregate to {spec.report_path}",
        ])
    store = load_store(paths.store) if paths.store else None
    manifest = _start_manifest("eval run", {
        "config": str(args.config), "style": spec.style,
        "strategy": spec.strategy, "k": spec.k,
    })
    for path in (paths.train, paths.test, paths.store, paths.aliases):
        if path:
            manifest.add_input(path)
    manifest.seeds["run"] = spec.seed
    report = run_experiment(spec, store=store)
    _finish_manifest(manifest, spec.report_path)
    agg = report.aggregate["aggregate"]
    print(f"evaluated {agg['count']} instances; micro-F1 {agg['micro_f1']:.4f}")
    print(f"report: {report.path}")
    return 0


def _cmd_eval_ablate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    spec, paths = experiment_from_config(
        cfg, Path(args.config).parent, seed=args.seed, limit=args.limit)
    shots = tuple(args.shots)
    if args.dry_run:
        return _plan([
            f"parse {paths.train} and {paths.test}",
            f"run the experiment once per shot count in {list(shots)}",
            f"write one report per shot count next to {spec.report_path}",
        ])
    store = load_store(paths.store) if paths.store else None
    manifest = _start_manifest("eval ablate", {
        "config": str(args.config), "shots": list(shots),
    })
    for path in (paths.train, paths.test, paths.store, paths.aliases):
        if path:
            manifest.add_input(path)
    manifest.seeds["run"] = spec.seed
    rows = ablate_shots(spec, shots=shots, store=store)
    manifest.extra["rows"] = rows
    _finish_manifest(manifest, spec.report_path)
    sys.stdout.write(ablation_markdown(rows))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.report)
    records, aggregate = _read_report_lines(path)
    if aggregate is None:
        raise ConfigError(f"{path}: no aggregate line; run the evaluation first")
    report = EvalReport(path=path, records=records, aggregate=aggregate)
    if args.format == "markdown":
        _emit(report_markdown(report), args.output)
    elif args.format == "csv":
        _emit(report_csv(report), args.output)
    else:
        _emit(confusion(report.scored_records()).to_csv(), args.output)
    return 0


def _add_dry_run(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dry-run", action="store_true",
                        help="print the plan without writing or networking")


def build_parser() -> _Parser:
    parser = _Parser(prog="relaware",
                     description="relation-aware demonstration retrieval "
                                 "and evaluation")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    # corpus
    corpus = sub.add_parser("corpus", help="corpus validation and sampling")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True,
                                       parser_class=_Parser)
    validate = corpus_sub.add_parser("validate", help="strict-parse a corpus")
    validate.add_argument("--corpus", required=True)
    validate.add_argument("--language", required=True, choices=LANGUAGES)
    validate.add_argument("--split", default="train", choices=SPLITS)
    validate.set_defaults(func=_cmd_corpus_validate)

    sample = corpus_sub.add_parser("sample", help="stratified subsample")
    sample.add_argument("--corpus", required=True)
    sample.add_argument("--language", required=True, choices=LANGUAGES)
    sample.add_argument("--split", default="train", choices=SPLITS)
    sample.add_argument("--n", required=True, type=int)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--output", required=True)
    _add_dry_run(sample)
    sample.set_defaults(func=_cmd_corpus_sample)

    # embed
    embed = sub.add_parser("embed", help="embedding store utilities")
    embed_sub = embed.add_subparsers(dest="subcommand", required=True,
                                     parser_class=_Parser)
    imp = embed_sub.add_parser("import", help="validate and convert a store")
    imp.add_argument("--input", required=True)
    imp.add_argument("--output", required=True)
    imp.add_argument("--format", default="binary", choices=("binary", "jsonl"))
    _add_dry_run(imp)
    imp.set_defaults(func=_cmd_embed_import)

    # pairs
    pairs = sub.add_parser("pairs", help="contrastive pair mining")
    pairs_sub = pairs.add_subparsers(dest="subcommand", required=True,
                                     parser_class=_Parser)
    mine = pairs_sub.add_parser("mine", help="mine top/bottom-k pairs")
    mine.add_argument("--corpus", required=True)
    mine.add_argument("--language", required=True, choices=LANGUAGES)
    mine.add_argument("--split", default="train", choices=SPLITS)
    mine.add_argument("--store", required=True)
    mine.add_argument("--k", type=int, default=5)
    mine.add_argument("--seed", type=int, default=0)
    for name in ("alpha1", "alpha2", "alpha3", "beta1", "beta2"):
        mine.add_argument(f"--{name}", type=float, default=None)
    mine.add_argument("--output", required=True)
    _add_dry_run(mine)
    mine.set_defaults(func=_cmd_pairs_mine)

    # head
    head = sub.add_parser("head", help="projection head training/application")
    head_sub = head.add_subparsers(dest="subcommand", required=True,
                                   parser_class=_Parser)
    htrain = head_sub.add_parser("train", help="train on mined pairs")
    htrain.add_argument("--pairs", required=True)
    htrain.add_argument("--store", required=True)
    htrain.add_argument("--output", required=True)
    htrain.add_argument("--config", default=None,
                        help="optional config with a [training] table")
    htrain.add_argument("--seed", type=int, default=None)
    htrain.add_argument("--init-seed", type=int, default=None)
    _add_dry_run(htrain)
    htrain.set_defaults(func=_cmd_head_train)

    happly = head_sub.add_parser("apply", help="project a store's channels")
    happly.add_argument("--head", required=True)
    happly.add_argument("--store", required=True)
    happly.add_argument("--output", required=True)
    happly.add_argument("--format", default="binary",
                        choices=("binary", "jsonl"))
    _add_dry_run(happly)
    happly.set_defaults(func=_cmd_head_apply)

    # retrieve
    ret = sub.add_parser("retrieve", help="select demonstrations per query")
    ret.add_argument("--pool", required=True, help="training corpus path")
    ret.add_argument("--queries", required=True, help="test corpus path")
    ret.add_argument("--language", required=True, choices=LANGUAGES)
    ret.add_argument("--store", default=None)
    ret.add_argument("--strategy", required=True, choices=STRATEGIES)
    ret.add_argument("--k", type=int, default=5)
    ret.add_argument("--seed", type=int, default=0)
    for name in ("alpha1", "alpha2", "beta1", "beta2"):
        ret.add_argument(f"--{name}", type=float, default=None)
    ret.add_argument("--output", required=True)
    _add_dry_run(ret)
    ret.set_defaults(func=_cmd_retrieve)

    # prompt
    prompt = sub.add_parser("prompt", help="prompt assembly")
    prompt_sub = prompt.add_subparsers(dest="subcommand", required=True,
                                       parser_class=_Parser)
    render = prompt_sub.add_parser("render",
                                   help="assemble one test instance's prompt")
    render.add_argument("--config", required=True)
    render.add_argument("--id", required=True, help="test instance id")
    render.add_argument("--seed", type=int, default=None)
    render.add_argument("--output", default=None)
    _add_dry_run(render)
    render.set_defaults(func=_cmd_prompt_render)

    # cot
    cot = sub.add_parser("cot", help="reasoning-text generation")
    cot_sub = cot.add_subparsers(dest="subcommand", required=True,
                                 parser_class=_Parser)
    gen = cot_sub.add_parser("generate",
                             help="precompute reasoning for the demo pool")
    gen.add_argument("--config", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--limit", type=int, default=None)
    _add_dry_run(gen)
    gen.set_defaults(func=_cmd_cot_generate)

    # eval
    ev = sub.add_parser("eval", help="experiment runs")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True,
                               parser_class=_Parser)
    run = ev_sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--limit", type=int, default=None)
    run.add_argument("--report", default=None,
                     help="override the report path from the config")
    _add_dry_run(run)
    run.set_defaults(func=_cmd_eval_run)

    abl = ev_sub.add_parser("ablate", help="rerun across shot counts")
    abl.add_argument("--config", required=True)
    abl.add_argument("--seed", type=int, default=None)
    abl.add_argument("--limit", type=int, default=None)
    abl.add_argument("--shots", type=int, nargs="+", default=[5, 10, 15])
    _add_dry_run(abl)
    abl.set_defaults(func=_cmd_eval_ablate)

    # report
    rep = sub.add_parser("report", help="emit tables from a finished report")
    rep.add_argument("--report", required=True)
    rep.add_argument("--format", default="markdown",
                     choices=("markdown", "csv", "confusion"))
    rep.add_argument("--output", default=None)
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - final safety net
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
