"""Command-line entry point: ingest, embed, retrieve, dataset, eval, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import (
    build_generation_service,
    build_provider,
    load_app_config,
    provider_for_index,
)
from .dataset import (
    CurationError,
    check_split_invariants,
    dataset_statistics,
    explode_mcq,
    build_rationales,
    export_sft,
    load_exam_questions,
    load_instances,
    merge_expert_curation,
    render_stats_table,
    save_instances,
    split_by_year,
)
from .evaluator import GenerationParams, TransportError
from .harness import EvalConfig, ablation_matrix, render_report, run_evaluation
from .index import (
    EmbeddingCache,
    IndexBuildError,
    ProviderError,
    VectorIndex,
    build_index,
    embed,
)
from .knowledgebase import CorpusFormatError, KnowledgeBase, corpus_statistics, ingest_corpus
from .prompting import PromptStrategy, load_exemplar_pool, preset_strategies
from .retriever import RetrievalQuery, Retriever, format_premises
from .session import SessionService, SessionStore


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags and env override it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapis",
        description="Crime-investigation legal reasoning toolkit",
    )
    parser.add_argument("--version", action="version", version=f"lapis {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a corpus file into an index directory")
    _add_config_flag(p)
    p.add_argument("--corpus", required=True, help="line-delimited corpus file")
    p.add_argument("--max-tokens", type=int, dest="max_tokens")
    p.add_argument("--out", required=True, help="index directory")

    p = sub.add_parser("embed", help="embed an ingested corpus into a vector index")
    _add_config_flag(p)
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--provider", help="embedding provider: hashing or remote")
    p.add_argument("--dim", type=int, dest="provider_dim")

    p = sub.add_parser("retrieve", help="retrieve premises for a context + hypothesis")
    _add_config_flag(p)
    p.add_argument("--index", required=True)
    p.add_argument("--context-file", help="file holding the investigation context")
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--out", help="write the machine-readable record here")

    p = sub.add_parser("dataset", help="dataset construction pipeline")
    dataset_sub = p.add_subparsers(dest="dataset_command", required=True)

    d = dataset_sub.add_parser("build", help="explode exam questions and assign splits")
    _add_config_flag(d)
    d.add_argument("--questions", required=True)
    d.add_argument("--out", required=True)

    d = dataset_sub.add_parser("rationales", help="generate and filter rationales")
    _add_config_flag(d)
    d.add_argument("--dataset", required=True)
    d.add_argument("--index", required=True)
    d.add_argument("--out", required=True)
    d.add_argument(
        "--strategies",
        nargs="+",
        default=list(("VP-ZS", "IRAC-ZS", "IRAC-1S", "CILR-ZS", "CILR-1S", "CILR-3S")),
        help="strategy presets to run",
    )
    d.add_argument("--mock-script", dest="mock_script")

    d = dataset_sub.add_parser("curate", help="merge an expert curation file")
    _add_config_flag(d)
    d.add_argument("--dataset", required=True)
    d.add_argument("--curation", required=True)
    d.add_argument("--out", required=True)

    d = dataset_sub.add_parser("export", help="export SFT records for a split")
    _add_config_flag(d)
    d.add_argument("--dataset", required=True)
    d.add_argument("--split", required=True, choices=["train", "dev"])
    d.add_argument("--out", required=True)

    d = dataset_sub.add_parser("stats", help="print dataset statistics")
    _add_config_flag(d)
    d.add_argument("--dataset", required=True)

    p = sub.add_parser("eval", help="run an evaluation or ablation matrix")
    _add_config_flag(p)
    p.add_argument("--eval-config", required=True, help="run config JSON (object or {runs: []})")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index")
    p.add_argument("--out", help="write the report record here")
    p.add_argument("--artifacts", help="write per-instance raw responses here")
    p.add_argument("--mock-script", dest="mock_script")

    p = sub.add_parser("serve", help="run the investigation session service")
    _add_config_flag(p)
    p.add_argument("--index", required=True)
    p.add_argument("--store", dest="store_path")
    p.add_argument("--port", type=int)
    p.add_argument("--mock-script", dest="mock_script")

    return parser


def _app_config(args: argparse.Namespace, **extra):
    overrides = dict(extra)
    for name in (
        "max_tokens",
        "k",
        "provider",
        "provider_dim",
        "mock_script",
        "store_path",
        "port",
    ):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    return load_app_config(getattr(args, "config", None), overrides=overrides)


def _load_index_components(index_dir: str, config):
    kb = KnowledgeBase.load(index_dir)
    index = VectorIndex.load(index_dir)
    provider = provider_for_index(index.provider_id, config)
    cache = EmbeddingCache(Path(index_dir) / "embedding_cache.jsonl")
    return kb, index, Retriever(kb, index, provider, cache)


def cmd_ingest(args) -> int:
    config = _app_config(args)
    kb = ingest_corpus(args.corpus, max_tokens=config.max_tokens)
    kb.save(args.out)
    stats = corpus_statistics(kb)
    print(f"ingested {len(kb.documents)} documents, {len(kb)} paragraphs")
    for kind, s in stats.per_kind.items():
        print(f"  {kind}: {s.paragraph_count} paragraphs, {s.token_count} tokens")
    print(f"  total: {stats.total_paragraphs} paragraphs, {stats.total_tokens} tokens")
    return 0


def cmd_embed(args) -> int:
    config = _app_config(args)
    kb = KnowledgeBase.load(args.index)
    provider = build_provider(config)
    cache = EmbeddingCache(Path(args.index) / "embedding_cache.jsonl")
    index = build_index(kb, provider, cache)
    index.save(args.index)
    print(f"indexed {len(index)} paragraphs with {provider.provider_id} (dim {provider.dim})")
    return 0


def cmd_retrieve(args) -> int:
    config = _app_config(args)
    kb, index, retriever = _load_index_components(args.index, config)
    context = ""
    if args.context_file:
        context = Path(args.context_file).read_text(encoding="utf-8")
    premises = retriever.retrieve_premises(
        RetrievalQuery(context, args.hypothesis, k=config.k)
    )
    print(format_premises(premises))
    if args.out:
        record = {
            "hypothesis": args.hypothesis,
            "k": config.k,
            "premises": [vars(p) for p in premises],
        }
        Path(args.out).write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def cmd_dataset_build(args) -> int:
    questions = load_exam_questions(args.questions)
    instances = []
    for q in questions:
        instances.extend(explode_mcq(q))
    split_by_year(instances)
    check_split_invariants(instances)
    save_instances(instances, args.out)
    print(f"built {len(instances)} instances from {len(questions)} questions")
    return 0


def cmd_dataset_rationales(args) -> int:
    config = _app_config(args)
    instances = load_instances(args.dataset)
    _, _, retriever = _load_index_components(args.index, config)
    service = build_generation_service(config)
    strategies = [PromptStrategy.preset(name) for name in args.strategies]
    pool = load_exemplar_pool()
    build_rationales(
        instances,
        strategies,
        retriever,
        service,
        exemplar_pool=pool,
        params=GenerationParams(config.temperature, config.gen_max_tokens),
        k=config.k,
        retry_cap=config.retry_cap,
        locale=config.locale,
    )
    save_instances(instances, args.out)
    total = sum(len(i.rationales) for i in instances)
    print(f"retained {total} rationales across {len(instances)} instances")
    return 0


def cmd_dataset_curate(args) -> int:
    instances = load_instances(args.dataset)
    merge_expert_curation(instances, args.curation)
    save_instances(instances, args.out)
    print(f"curated dataset written to {args.out}")
    return 0


def cmd_dataset_export(args) -> int:
    instances = load_instances(args.dataset)
    records = export_sft(instances, args.split, path=args.out)
    print(f"exported {len(records)} SFT records for split {args.split}")
    return 0


def cmd_dataset_stats(args) -> int:
    instances = load_instances(args.dataset)
    print(render_stats_table(dataset_statistics(instances)))
    return 0


def _eval_config_from_dict(rec: dict) -> EvalConfig:
    params = rec.get("params", {})
    return EvalConfig(
        model_id=rec["model_id"],
        strategy=PromptStrategy.preset(rec["method"]),
        dataset_split=rec.get("dataset_split", "test"),
        k=rec.get("k", 5),
        exemplar_seed=rec.get("exemplar_seed", 0),
        locale=rec.get("locale", "en"),
        params=GenerationParams(
            temperature=params.get("temperature", 0.0),
            max_tokens=params.get("max_tokens", 1024),
        ),
        exclusions=tuple(rec.get("exclusions", ())),
        f1_mode=rec.get("f1_mode", "binary_true"),
        retry_cap=rec.get("retry_cap", 2),
    )


def cmd_eval(args) -> int:
    config = _app_config(args)
    instances = load_instances(args.dataset)
    raw = json.loads(Path(args.eval_config).read_text(encoding="utf-8"))
    service = build_generation_service(config)
    pool = load_exemplar_pool()

    retriever = None
    if args.index:
        _, _, retriever = _load_index_components(args.index, config)

    runs = raw["runs"] if isinstance(raw, dict) and "runs" in raw else raw
    if isinstance(runs, list):
        configs = [_eval_config_from_dict(r) for r in runs]
        services = {c.model_id: service for c in configs}
        result = ablation_matrix(
            configs, instances, services, retriever=retriever, exemplar_pool=pool
        )
        print(result.table)
        for model_id, message in result.errors:
            print(f"run failed: {model_id}: {message}", file=sys.stderr)
        if args.out:
            Path(args.out).write_text(
                json.dumps([r.to_dict() for r in result.reports], indent=2) + "\n",
                encoding="utf-8",
            )
        return 0 if not result.errors else 1

    eval_config = _eval_config_from_dict(runs)
    report = run_evaluation(
        eval_config,
        instances,
        service,
        retriever=retriever,
        exemplar_pool=pool,
        artifacts_path=args.artifacts,
    )
    print(render_report(report))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = _app_config(args)
    if not config.store_path:
        raise ValueError("serve requires --store or LAPIS_STORE")
    kb, index, retriever = _load_index_components(args.index, config)
    service = SessionService(
        store=SessionStore(config.store_path),
        retriever=retriever,
        generation=build_generation_service(config),
        exemplar_pool=load_exemplar_pool(),
        k=config.k,
        params=GenerationParams(config.temperature, config.gen_max_tokens),
        retry_cap=config.retry_cap,
        locale=config.locale,
    )
    app = create_app(service, kb=kb, api_token=config.api_token)
    uvicorn.run(app, host="127.0.0.1", port=config.port)
    return 0


_HANDLERS = {
    ("ingest", None): cmd_ingest,
    ("embed", None): cmd_embed,
    ("retrieve", None): cmd_retrieve,
    ("dataset", "build"): cmd_dataset_build,
    ("dataset", "rationales"): cmd_dataset_rationales,
    ("dataset", "curate"): cmd_dataset_curate,
    ("dataset", "export"): cmd_dataset_export,
    ("dataset", "stats"): cmd_dataset_stats,
    ("eval", None): cmd_eval,
    ("serve", None): cmd_serve,
}

_ERROR_CATEGORIES = [
    (CorpusFormatError, "corpus-format"),
    (CurationError, "curation"),
    (IndexBuildError, "index-build"),
    (ProviderError, "provider"),
    (TransportError, "transport"),
    (FileNotFoundError, "not-found"),
    (LookupError, "not-found"),
    (ValueError, "invalid"),
]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[(args.command, getattr(args, "dataset_command", None))]
    try:
        return handler(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        for exc_type, category in _ERROR_CATEGORIES:
            if isinstance(exc, exc_type):
                print(f"error:{category}: {exc}", file=sys.stderr)
                return 1
        print(f"error:internal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
