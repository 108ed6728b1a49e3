"""Umbrella command line: ingest, synth, index, train, route, eval, serve.

Configuration precedence is flags over environment over config file. The
config file is plain JSON because this package supports Python 3.10, which
has no stdlib TOML reader.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .adapter import TrainConfig, load_adapter, save_adapter, train_adapter
from .datasets import (
    NegativePolicy,
    gen_schema_pairs,
    gen_statement_pairs,
    gen_table_pairs,
    load_pairs,
    load_splits,
    make_splits,
    save_pairs,
    save_splits,
)
from .embedding import EmbeddingCache, ProviderConfig
from .evaluation import (
    VerticalClusters,
    evaluate_split,
    load_clusters,
    run_experiment,
    write_reports_csv,
    write_reports_json,
)
from .rerank import HttpLlmClient, LlmConfig, rerank
from .retrieval import STRATEGIES, Scorer, build_index, load_index, save_index
from .schema import convert_bird, convert_spider, ingest_corpus, write_manifest

PAIR_KINDS = ("schema", "statement", "table")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _add_provider_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("embedding provider")
    group.add_argument("--provider", choices=["deterministic-test", "remote"], default=None,
                       help="provider kind (default: remote if an endpoint is configured)")
    group.add_argument("--embed-url", default=None, help="embedding endpoint URL")
    group.add_argument("--embed-model", default=None, help="model name sent to the endpoint")
    group.add_argument("--dim", type=int, default=None, help="vector dim for the test provider")
    group.add_argument("--cache", default=None, help="sqlite embedding cache path")


def _provider_from_args(args, file_cfg: dict | None = None) -> ProviderConfig:
    cfg = dict((file_cfg or {}).get("provider", {}))
    if args.embed_url:
        cfg["kind"] = "remote"
        cfg["endpoint"] = args.embed_url
    if args.provider:
        cfg["kind"] = args.provider
        if args.provider == "deterministic-test":
            cfg.pop("endpoint", None)
    if args.embed_model:
        cfg["model"] = args.embed_model
    if args.dim:
        cfg["dim"] = args.dim
    if "kind" in cfg:
        return ProviderConfig(**cfg)
    return ProviderConfig.from_env(**cfg)


def _cache_from_args(args) -> EmbeddingCache | None:
    return EmbeddingCache(args.cache) if getattr(args, "cache", None) else None


def _scorer_from_args(args) -> Scorer:
    corpus = ingest_corpus(args.manifest)
    index = load_index(args.index)
    provider = _provider_from_args(args)
    adapter = load_adapter(args.adapter) if getattr(args, "adapter", None) else None
    return Scorer(
        corpus=corpus, index=index, provider=provider,
        adapter=adapter, cache=_cache_from_args(args),
    )


def _clusters_from_args(args, corpus) -> VerticalClusters | None:
    if getattr(args, "clusters", None):
        return load_clusters(args.clusters)
    derived = VerticalClusters.from_corpus(corpus)
    return derived if derived.assignment else None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    clusters = json.loads(Path(args.clusters).read_text()) if args.clusters else None
    if args.format in ("spider", "bird") and not args.out:
        return _fail(f"--out is required when converting a {args.format} release")
    if args.format == "spider":
        databases, samples = convert_spider(args.src, clusters=clusters)
    elif args.format == "bird":
        databases, samples = convert_bird(args.src, clusters=clusters)
    else:
        corpus = ingest_corpus(args.src)
        print(f"manifest at {args.src} is valid: "
              f"{len(corpus.databases)} databases, {len(corpus.samples)} questions")
        return 0
    write_manifest(args.out, databases, samples)
    corpus = ingest_corpus(args.out)
    print(f"wrote {args.out}: {len(corpus.databases)} databases "
          f"({len(corpus.holdout_db_ids)} held out), {len(corpus.samples)} questions")
    return 0


def cmd_synth(args) -> int:
    corpus = ingest_corpus(args.manifest)
    dataset = make_splits(corpus, in_fraction=args.in_fraction, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_splits(out / "splits.json", dataset)
    print(f"splits: {len(dataset.train)} train, {len(dataset.test_in)} in-test, "
          f"{len(dataset.test_out)} out-test")
    for warning in dataset.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    kinds = PAIR_KINDS if args.kind == "all" else (args.kind,)
    for kind in kinds:
        if kind == "schema":
            pairs = gen_schema_pairs(
                dataset, corpus, policy=NegativePolicy.parse(args.policy), seed=args.seed
            )
        elif kind == "statement":
            pairs = gen_statement_pairs(
                dataset, corpus, hard_per_q=args.hard_per_question,
                soft_per_q=args.soft_per_question, seed=args.seed,
            )
        else:
            pairs = gen_table_pairs(
                dataset, corpus, seed=args.seed,
                negatives_per_positive=args.negatives_per_positive,
            )
        path = out / f"{kind}_pairs.jsonl"
        save_pairs(path, pairs)
        positives = sum(1 for p in pairs if p.label == 1)
        print(f"{kind}: {positives} positive / {len(pairs) - positives} negative -> {path}")
    return 0


def cmd_index_build(args) -> int:
    corpus = ingest_corpus(args.manifest)
    provider = _provider_from_args(args)
    adapter = load_adapter(args.adapter) if args.adapter else None
    index = build_index(
        corpus, provider, adapter=adapter,
        include_whole=not args.no_whole,
        include_tables=not args.no_tables,
        include_statements=not args.no_statements,
        cache=_cache_from_args(args),
    )
    save_index(args.out, index)
    print(f"indexed {len(index.db_ids)} databases "
          f"({len(index.table_vectors)} tables, {len(index.statement_vectors)} statements) "
          f"dim {index.dim} -> {args.out}")
    return 0


def cmd_index_inspect(args) -> int:
    index = load_index(args.file)
    info = {
        "provider": index.provider_id,
        "adapter": index.adapter_digest,
        "dim": index.dim,
        "granularities": list(index.granularities),
        "databases": len(index.db_ids),
        "table_vectors": len(index.table_vectors),
        "statement_vectors": len(index.statement_vectors),
    }
    print(json.dumps(info, indent=2))
    return 0


def cmd_train(args) -> int:
    pairs = load_pairs(args.pairs)
    provider = _provider_from_args(args)
    cfg = TrainConfig(
        batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs,
        seed=args.seed, loss_mode=args.mode, margin=args.margin,
    )
    result = train_adapter(pairs, provider, cfg)
    for epoch, loss in enumerate(result.epoch_losses):
        marker = " *" if epoch == result.best_epoch else ""
        print(f"epoch {epoch}: mean loss {loss:.6f}{marker}")
    save_adapter(args.out, result.adapter, seed=args.seed)
    print(f"adapter ({'x'.join(str(s) for s in result.adapter.weight.shape)}, "
          f"{result.adapter.mode}) -> {args.out}")
    return 0


def _make_reranker(args, scorer):
    llm = LlmConfig.from_env()
    if not llm.endpoint or not llm.model:
        raise ValueError(
            "llm-rerank needs DBROUTER_LLM_URL and DBROUTER_LLM_MODEL (or a config file)"
        )
    client = HttpLlmClient(llm)

    def _rerank(question_id, text, ranked):
        return rerank(
            question_id, text, ranked, scorer, llm, client,
            shortlist_k=args.shortlist, tables_k=args.tables,
        )

    return _rerank


def cmd_route(args) -> int:
    scorer = _scorer_from_args(args)
    if args.strategy == "llm-rerank":
        reranker = _make_reranker(args, scorer)
        base = scorer.rank_databases("cli", args.question, "pooled-tables")
        ranked = reranker("cli", args.question, base)
    else:
        ranked = scorer.rank_databases("cli", args.question, args.strategy)
    for pos, (db_id, score) in enumerate(ranked.entries[: args.top_k], start=1):
        print(f"{pos}. {db_id}  {score:.4f}")
    return 0


def cmd_eval(args) -> int:
    scorer = _scorer_from_args(args)
    corpus = scorer.corpus
    if args.splits:
        dataset = load_splits(args.splits, corpus)
    else:
        dataset = make_splits(corpus, in_fraction=args.in_fraction, seed=args.seed)
    clusters = _clusters_from_args(args, corpus)
    reranker = _make_reranker(args, scorer) if args.strategy == "llm-rerank" else None

    if args.protocol:
        kwargs = dict(scorer=scorer)
        if args.protocol == "subset-scaling":
            kwargs.update(dataset=dataset, sizes=args.sizes, seed=args.seed,
                          strategy=args.strategy, clusters=clusters, reranker=reranker)
        elif args.protocol == "cluster-matched":
            if clusters is None:
                return _fail("cluster-matched needs --clusters or clustered databases")
            kwargs.update(dataset=dataset, clusters=clusters, n_sets=args.n_sets,
                          seed=args.seed, strategy=args.strategy,
                          strict=not args.relaxed, reranker=reranker)
        elif args.protocol == "metadata-ablation":
            samples = list(dataset.test_in) + list(dataset.test_out)
            scope = sorted(dataset.db_sets.test_in | dataset.db_sets.test_out)
            kwargs.update(samples=samples, db_scope=scope, clusters=clusters)
        else:
            kwargs.update(dataset=dataset, strategy=args.strategy,
                          clusters=clusters, reranker=reranker)
        reports = run_experiment(args.protocol, **kwargs)
    else:
        reports = {}
        if args.split in ("in", "both") and dataset.test_in:
            reports["in-repository"] = evaluate_split(
                scorer, list(dataset.test_in), sorted(dataset.db_sets.test_in),
                args.strategy, clusters, reranker, keep_rows=False,
            )
        if args.split in ("out", "both") and dataset.test_out:
            reports["cross-repository"] = evaluate_split(
                scorer, list(dataset.test_out), sorted(dataset.db_sets.test_out),
                args.strategy, clusters, reranker, keep_rows=False,
            )
        if not reports:
            return _fail(f"no test questions for split {args.split!r}")

    for name in sorted(reports):
        r = reports[name]
        parts = [f"n={r.n}", f"R@1={r.overall_r1:.2f}", f"R@3={r.overall_r3:.2f}",
                 f"mAP={r.overall_map:.2f}"]
        if r.has_vertical:
            parts += [f"WV-R@1={r.within_r1:.2f}", f"AV-R@1={r.across_r1:.2f}",
                      f"AV-R@3={r.across_r3:.2f}", f"AV-mAP={r.across_map:.2f}"]
        print(f"{name}: " + " ".join(parts))
    if args.report:
        write_reports_json(args.report, reports)
        print(f"report -> {args.report}")
    if args.csv:
        write_reports_csv(args.csv, reports)
        print(f"csv -> {args.csv}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    file_cfg = _load_config(args.config)
    provider = _provider_from_args(args, file_cfg)
    llm_cfg = None
    llm_section = file_cfg.get("llm")
    if llm_section:
        llm_cfg = LlmConfig(**llm_section)
    else:
        env_llm = LlmConfig.from_env()
        if env_llm.endpoint:
            llm_cfg = env_llm

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    cfg = ServiceConfig(
        manifest_dir=pick(args.manifest, "manifest", None),
        index_path=pick(args.index, "index", None),
        host=pick(args.host, "host", "127.0.0.1"),
        port=pick(args.port, "port", 8080),
        strategy=pick(args.strategy, "strategy", "pooled-tables"),
        top_k=pick(args.top_k, "top_k", 3),
        provider=provider,
        llm=llm_cfg,
        adapter_path=pick(args.adapter, "adapter", None),
        cache_path=pick(args.cache, "cache", None),
    )
    if not cfg.manifest_dir or not cfg.index_path:
        return _fail("serve needs --manifest and --index (flags or config file)")
    serve(cfg)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbrouter",
        description="Route natural-language questions to the database that can answer them.",
    )
    parser.add_argument("--version", action="version", version=f"dbrouter {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a dataset release or validate a manifest")
    p.add_argument("--format", choices=["spider", "bird", "manifest"], required=True)
    p.add_argument("--src", required=True, help="release directory or manifest directory")
    p.add_argument("--out", help="manifest output directory (spider/bird)")
    p.add_argument("--clusters", help="JSON db_id->cluster file to attach")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="derive splits and contrastive pair files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=list(PAIR_KINDS) + ["all"], default="all")
    p.add_argument("--in-fraction", type=float, default=0.16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", default="all", help="schema negatives: all | per-question:K | per-db-pair:M")
    p.add_argument("--hard-per-question", type=int, default=1)
    p.add_argument("--soft-per-question", type=int, default=2)
    p.add_argument("--negatives-per-positive", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("index", help="build or inspect a vector index")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    b = index_sub.add_parser("build")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--adapter", help="apply a trained adapter file")
    b.add_argument("--no-whole", action="store_true")
    b.add_argument("--no-tables", action="store_true")
    b.add_argument("--no-statements", action="store_true")
    _add_provider_args(b)
    b.set_defaults(func=cmd_index_build)
    i = index_sub.add_parser("inspect")
    i.add_argument("file")
    i.set_defaults(func=cmd_index_inspect)

    p = sub.add_parser("train", help="train a linear adapter on a pair file")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-6)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--mode", choices=["distance-standard", "paper-literal"],
                   default="distance-standard")
    p.add_argument("--seed", type=int, default=0)
    _add_provider_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("route", help="rank databases for one question")
    p.add_argument("--question", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="pooled-tables")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--adapter")
    p.add_argument("--shortlist", type=int, default=10, help="llm-rerank shortlist size")
    p.add_argument("--tables", type=int, default=3, help="llm-rerank tables per candidate")
    _add_provider_args(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("eval", help="run metrics or an experiment protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="pooled-tables")
    p.add_argument("--splits", help="splits file from synth; omitted -> derive")
    p.add_argument("--in-fraction", type=float, default=0.16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=["in", "out", "both"], default="both")
    p.add_argument("--clusters", help="JSON db_id->cluster file")
    p.add_argument("--protocol", choices=["subset-scaling", "cluster-matched",
                                          "metadata-ablation", "in-vs-cross"])
    p.add_argument("--sizes", type=int, nargs="+", default=[20, 60, 80, 120, 160])
    p.add_argument("--n-sets", type=int, default=7)
    p.add_argument("--relaxed", action="store_true",
                   help="allow cluster-matched sets that split oversized slots")
    p.add_argument("--report", help="write reports as JSON")
    p.add_argument("--csv", help="write reports as CSV")
    p.add_argument("--adapter")
    p.add_argument("--shortlist", type=int, default=10)
    p.add_argument("--tables", type=int, default=3)
    _add_provider_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP routing service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--manifest")
    p.add_argument("--index")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--adapter")
    _add_provider_args(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
