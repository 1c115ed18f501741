"""Command-line entry point: one binary, one subcommand per pipeline stage.

Exit codes: 0 on success, 1 on user error (bad flags, malformed files,
missing inputs), 2 on environment trouble (endpoints unreachable, all
questions excluded). Every run logs its effective configuration so a
report can be tied back to the settings that produced it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from . import __version__, corpus as corpus_mod, qa as qa_mod
from .errors import EndpointError, UserInputError, WorkbenchError
from .gateway import (
    ChatRequest,
    chat_complete,
    default_registry,
    load_registry,
    set_max_inflight,
)
from .judge import (
    aggregate,
    emit_report,
    format_leaderboard,
    leaderboard_to_json,
    load_questions,
    load_records,
    run_benchmark,
)
from .rag import DEFAULT_TEMPLATE, augment_prompt, rag_answer, retrieve
from .tfidf import build_index, load_index, save_index
from .tfidf.index import search

logger = logging.getLogger(__name__)

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class WorkbenchConfig:
    """Defaults for every stage; a config file and flags override in turn."""

    corpus: str | None = None
    index_dir: str | None = None
    registry: str | None = None
    threshold: float = 0.1
    limit: int = 3
    excerpt_chars: int = 1200
    max_fragment_chars: int = 1500
    ratio: float = 0.75
    seed: int = 42
    parallelism: int = 4
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 60.0
    retry_max: int = 3
    judge_reasks: int = 1
    log_level: str = "INFO"

    @classmethod
    def load(cls, path: str | Path) -> "WorkbenchConfig":
        p = Path(path)
        try:
            raw = p.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise UserInputError(f"config file not found: {p}") from None
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise UserInputError(f"malformed config {p}: {exc.msg}") from exc
        if not isinstance(payload, dict):
            raise UserInputError(f"config {p} must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise UserInputError(
                f"config {p} has unknown keys: {', '.join(sorted(unknown))}"
            )
        cfg = cls(**payload)
        for name in ("corpus", "registry", "index_dir"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).exists():
                raise UserInputError(f"config {p}: {name} path does not exist: {value}")
        if cfg.log_level not in _LOG_LEVELS:
            raise UserInputError(f"config {p}: unknown log_level {cfg.log_level!r}")
        return cfg

    def describe(self) -> str:
        return json.dumps(
            {f.name: getattr(self, f.name) for f in fields(self)}, sort_keys=True
        )


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors follow the exit-code contract."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UserInputError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ragwb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ragwb {__version__}")
    parser.add_argument("--config", help="JSON config file with default settings")
    parser.add_argument("--seed", type=int, help="seed for all randomized steps")
    parser.add_argument("--log-level", choices=_LOG_LEVELS, help="logging verbosity")
    parser.add_argument(
        "--parallelism", type=int, help="max concurrent endpoint requests"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", help="load a corpus file and build its ledger")
    p.add_argument("--corpus", help="corpus JSON file")
    p.add_argument("--ledger", help="write the ingestion ledger to this file")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--corpus", help="corpus JSON file")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=_cmd_stats)

    qa = sub.add_parser("qa", help="QA dataset curation")
    qa_sub = qa.add_subparsers(dest="qa_command", required=True, metavar="subcommand")

    p = qa_sub.add_parser("fragment", help="split corpus texts into fragments")
    p.add_argument("--corpus", help="corpus JSON file")
    p.add_argument("--out", required=True, help="fragment file to write")
    p.add_argument("--max-chars", type=int, help="fragment size bound")
    p.set_defaults(func=_cmd_qa_fragment)

    p = qa_sub.add_parser("generate", help="generate QA pairs from fragments")
    p.add_argument("--fragments", required=True, help="fragment file")
    p.add_argument("--generator", required=True, help="registry variant to use")
    p.add_argument("--registry", help="variant registry file")
    p.add_argument("--out", required=True, help="pair file to write")
    p.add_argument("--instruction", help="file with the generation instructions")
    p.set_defaults(func=_cmd_qa_generate)

    p = qa_sub.add_parser("split", help="deterministic train/test split")
    p.add_argument("--pairs", required=True, help="pair file")
    p.add_argument("--out", required=True, help="directory for the split")
    p.add_argument("--ratio", type=float, help="train share, default 0.75")
    p.set_defaults(func=_cmd_qa_split)

    p = qa_sub.add_parser("stats", help="pair counts and mean lengths")
    p.add_argument("--pairs", required=True, help="pair file")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=_cmd_qa_stats)

    index = sub.add_parser("index", help="TF-IDF index")
    index_sub = index.add_subparsers(
        dest="index_command", required=True, metavar="subcommand"
    )

    p = index_sub.add_parser("build", help="index a corpus")
    p.add_argument("--corpus", help="corpus JSON file")
    p.add_argument("--out", required=True, help="index directory to write")
    p.add_argument("--stopwords", help="file with one stopword per line")
    p.add_argument(
        "--with-metadata",
        action="store_true",
        help="index title/description metadata along with the text",
    )
    p.set_defaults(func=_cmd_index_build)

    p = index_sub.add_parser("query", help="score a query against an index")
    p.add_argument("--dir", required=True, help="index directory")
    p.add_argument("--text", required=True, help="query text")
    p.add_argument("--top", type=int, default=10, help="rows to print")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=_cmd_index_query)

    rag = sub.add_parser("rag", help="retrieval-augmented prompting")
    rag_sub = rag.add_subparsers(dest="rag_command", required=True, metavar="subcommand")

    p = rag_sub.add_parser("query", help="retrieve, augment, and ask a model")
    p.add_argument("--index", help="index directory")
    p.add_argument("--corpus", help="corpus JSON file with the document texts")
    p.add_argument("--text", required=True, help="the question")
    p.add_argument("--model", help="registry variant to ask")
    p.add_argument("--registry", help="variant registry file")
    p.add_argument("--threshold", type=float, help="minimum score for a hit")
    p.add_argument("--limit", type=int, help="max hits")
    p.add_argument("--excerpt-chars", type=int, help="excerpt length per hit")
    p.add_argument("--template", help="file with the prompt template")
    p.add_argument(
        "--dry-run",
        action="store_true",
        help="stop after building the prompt, no endpoint call",
    )
    p.set_defaults(func=_cmd_rag_query)

    bench = sub.add_parser("bench", help="leaderboard benchmark")
    bench_sub = bench.add_subparsers(
        dest="bench_command", required=True, metavar="subcommand"
    )

    p = bench_sub.add_parser("run", help="answer, judge, and aggregate")
    p.add_argument("--questions", required=True, help="question file")
    p.add_argument("--registry", help="variant registry file")
    p.add_argument("--judge", required=True, help="registry variant that judges")
    p.add_argument("--corpus", help="corpus JSON file (needed for RAG variants)")
    p.add_argument("--index-root", help="directory containing index directories")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--threshold", type=float, help="retrieval score threshold")
    p.add_argument("--limit", type=int, help="retrieval hit limit")
    p.add_argument("--excerpt-chars", type=int, help="excerpt length per hit")
    p.add_argument("--template", help="file with the prompt template")
    p.add_argument("--judge-reasks", type=int, help="re-asks on unparseable replies")
    p.set_defaults(func=_cmd_bench_run)

    p = bench_sub.add_parser("report", help="re-render reports from records.json")
    p.add_argument("--dir", required=True, help="report directory from bench run")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=_cmd_bench_report)

    return parser


def _load_corpus_arg(args, cfg: WorkbenchConfig) -> dict[str, corpus_mod.ThesisRecord]:
    path = getattr(args, "corpus", None) or cfg.corpus
    if not path:
        raise UserInputError("no corpus file given (use --corpus)")
    warnings: list[str] = []
    try:
        records = corpus_mod.load_corpus(path, warnings)
    except FileNotFoundError:
        raise UserInputError(f"corpus file not found: {path}") from None
    for message in warnings:
        logger.warning("%s", message)
    return records


def _registry_arg(args, cfg: WorkbenchConfig):
    path = getattr(args, "registry", None) or cfg.registry
    if path:
        return load_registry(path)
    return default_registry()


def _template_arg(args) -> str:
    path = getattr(args, "template", None)
    if not path:
        return DEFAULT_TEMPLATE
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UserInputError(f"template file not found: {path}") from None


def _pick(flag_value, cfg_value):
    return cfg_value if flag_value is None else flag_value


# --- subcommands -------------------------------------------------------------

def _cmd_ingest(args, cfg: WorkbenchConfig) -> int:
    records = _load_corpus_arg(args, cfg)
    ledger = corpus_mod.Ledger()
    for uri in sorted(records):
        ledger.enqueue(uri)
        if records[uri].raw_content:
            ledger.advance(uri, corpus_mod.PROCESSED)
        else:
            ledger.advance(uri, corpus_mod.FAILED, error="no extracted text")
    if args.ledger:
        ledger.save(args.ledger)
        logger.info("ledger written to %s", args.ledger)
    counts = ledger.counts()
    print(
        f"records {len(records)}  processed {counts[corpus_mod.PROCESSED]}  "
        f"failed {counts[corpus_mod.FAILED]}"
    )
    return 0


def _cmd_stats(args, cfg: WorkbenchConfig) -> int:
    records = _load_corpus_arg(args, cfg)
    stats = corpus_mod.compute_stats(records)
    if args.format == "json":
        print(json.dumps(stats.to_dict(), ensure_ascii=False, indent=2))
    else:
        print(corpus_mod.format_stats_table(stats), end="")
    return 0


def _cmd_qa_fragment(args, cfg: WorkbenchConfig) -> int:
    records = _load_corpus_arg(args, cfg)
    max_chars = _pick(args.max_chars, cfg.max_fragment_chars)
    try:
        fragments = qa_mod.fragment_corpus(records, max_chars)
    except ValueError as exc:
        raise UserInputError(str(exc)) from None
    qa_mod.save_fragments(fragments, args.out)
    print(f"fragments {len(fragments)}  documents {len({f.source_uri for f in fragments})}")
    return 0


def _cmd_qa_generate(args, cfg: WorkbenchConfig) -> int:
    fragments = qa_mod.load_fragments(args.fragments)
    registry = _registry_arg(args, cfg)
    if args.generator not in registry:
        raise UserInputError(f"unknown registry variant {args.generator!r}")
    variant = registry[args.generator]
    instruction = qa_mod.DEFAULT_QA_INSTRUCTION
    if args.instruction:
        try:
            instruction = Path(args.instruction).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise UserInputError(
                f"instruction file not found: {args.instruction}"
            ) from None

    def generator(prompt: str) -> str:
        request = ChatRequest(
            messages=[{"role": "user", "content": prompt}],
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
            timeout=cfg.timeout,
        )
        return chat_complete(variant, request, retry_max=cfg.retry_max).content

    result = qa_mod.generate_qa_batch(
        fragments, generator, instruction, parallelism=cfg.parallelism
    )
    qa_mod.save_pairs(result.pairs, args.out)
    print(f"pairs {len(result.pairs)}  skipped_lines {result.skipped}")
    return 0


def _cmd_qa_split(args, cfg: WorkbenchConfig) -> int:
    pairs = qa_mod.load_pairs(args.pairs)
    split = qa_mod.split_dataset(
        pairs, seed=cfg.seed, ratio=_pick(args.ratio, cfg.ratio)
    )
    qa_mod.save_split(split, args.out)
    print(f"train {len(split.train)}  test {len(split.test)}  seed {split.seed}")
    return 0


def _cmd_qa_stats(args, cfg: WorkbenchConfig) -> int:
    pairs = qa_mod.load_pairs(args.pairs)
    stats = qa_mod.qa_stats(pairs)
    if args.format == "json":
        print(json.dumps(stats, indent=2))
    else:
        for key, value in stats.items():
            print(f"{key}  {value}")
    return 0


def _cmd_index_build(args, cfg: WorkbenchConfig) -> int:
    records = _load_corpus_arg(args, cfg)
    stopwords = None
    if args.stopwords:
        try:
            words = Path(args.stopwords).read_text(encoding="utf-8").split()
        except FileNotFoundError:
            raise UserInputError(f"stopword file not found: {args.stopwords}") from None
        stopwords = frozenset(w.lower() for w in words)
    docs = []
    for uri in sorted(records):
        record = records[uri]
        if not record.raw_content:
            continue
        if args.with_metadata:
            text = "\n".join(
                part
                for part in (record.title, record.description, record.raw_content)
                if part
            )
        else:
            text = record.raw_content
        docs.append((uri, text))
    index = build_index(docs, stopwords)
    paths = save_index(index, args.out)
    print(
        f"documents {index.n_docs}  terms {index.n_terms}  "
        f"matrix {paths['matrix']}"
    )
    return 0


def _cmd_index_query(args, cfg: WorkbenchConfig) -> int:
    if args.top < 1:
        raise UserInputError("--top must be >= 1")
    index = load_index(args.dir)
    results = search(index, args.text)[: args.top]
    if args.format == "json":
        payload = [
            {"uri": index.uris[row], "score": score} for row, score in results
        ]
        print(json.dumps(payload, ensure_ascii=False, indent=2))
    else:
        for row, score in results:
            print(f"{score:.6f}\t{index.uris[row]}")
    return 0


def _cmd_rag_query(args, cfg: WorkbenchConfig) -> int:
    index_dir = args.index or cfg.index_dir
    if not index_dir:
        raise UserInputError(
            "no index directory given (use --index, or build one with 'index build')"
        )
    index = load_index(index_dir)
    records = _load_corpus_arg(args, cfg)
    texts = {uri: r.raw_content for uri, r in records.items()}
    template = _template_arg(args)
    threshold = _pick(args.threshold, cfg.threshold)
    limit = _pick(args.limit, cfg.limit)
    excerpt_chars = _pick(args.excerpt_chars, cfg.excerpt_chars)

    if args.dry_run:
        retrieval = retrieve(
            index,
            texts,
            args.text,
            threshold=threshold,
            limit=limit,
            excerpt_chars=excerpt_chars,
        )
        prompt = augment_prompt(
            args.text, [h.excerpt for h in retrieval.hits], template
        )
        payload = {
            "query": args.text,
            "threshold": retrieval.threshold,
            "limit": retrieval.limit,
            "hits": [{"uri": h.uri, "score": h.score} for h in retrieval.hits],
            "prompt": prompt,
        }
        print(json.dumps(payload, ensure_ascii=False, indent=2))
        return 0

    if not args.model:
        raise UserInputError("no model given (use --model, or --dry-run to skip it)")
    registry = _registry_arg(args, cfg)
    if args.model not in registry:
        raise UserInputError(f"unknown registry variant {args.model!r}")
    response, retrieval = rag_answer(
        registry[args.model],
        args.text,
        index,
        texts,
        threshold=threshold,
        limit=limit,
        excerpt_chars=excerpt_chars,
        template=template,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        timeout=cfg.timeout,
        retry_max=cfg.retry_max,
    )
    payload = {
        "query": args.text,
        "model": args.model,
        "threshold": retrieval.threshold,
        "limit": retrieval.limit,
        "hits": [{"uri": h.uri, "score": h.score} for h in retrieval.hits],
        "answer": response.content,
        "latency_ms": response.latency_ms,
    }
    print(json.dumps(payload, ensure_ascii=False, indent=2))
    return 0


def _cmd_bench_run(args, cfg: WorkbenchConfig) -> int:
    questions = load_questions(args.questions)
    registry = _registry_arg(args, cfg)
    if args.judge not in registry:
        raise UserInputError(f"unknown judge variant {args.judge!r}")
    judge = registry[args.judge]
    variants = {name: v for name, v in registry.items() if name != args.judge}
    if not variants:
        raise UserInputError("registry has no variants besides the judge")

    texts = None
    if any(v.uses_rag for v in variants.values()):
        texts = {
            uri: r.raw_content for uri, r in _load_corpus_arg(args, cfg).items()
        }

    run = run_benchmark(
        questions,
        variants,
        judge,
        seed=cfg.seed,
        texts=texts,
        index_root=args.index_root,
        parallelism=cfg.parallelism,
        judge_reasks=_pick(args.judge_reasks, cfg.judge_reasks),
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        timeout=cfg.timeout,
        retry_max=cfg.retry_max,
        threshold=_pick(args.threshold, cfg.threshold),
        limit=_pick(args.limit, cfg.limit),
        excerpt_chars=_pick(args.excerpt_chars, cfg.excerpt_chars),
        template=_template_arg(args),
    )
    board = aggregate(run.records, run.variant_names)
    emit_report(run, board, args.out, include_records=True)
    for excl in run.excluded:
        logger.warning("excluded %s: %s", excl.question_id, excl.reason)
    print(format_leaderboard(board), end="")
    return 0


def _cmd_bench_report(args, cfg: WorkbenchConfig) -> int:
    run = load_records(Path(args.dir) / "records.json")
    board = aggregate(run.records, run.variant_names)
    emit_report(run, board, args.dir, include_records=False)
    if args.format == "json":
        print(leaderboard_to_json(board, run.seed), end="")
    else:
        print(format_leaderboard(board), end="")
    return 0


# --- dispatch ----------------------------------------------------------------

def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand, map errors to exit codes."""
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))

        cfg = WorkbenchConfig.load(args.config) if args.config else WorkbenchConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.log_level is not None:
            overrides["log_level"] = args.log_level
        if args.parallelism is not None:
            overrides["parallelism"] = args.parallelism
        if overrides:
            cfg = replace(cfg, **overrides)

        logging.basicConfig(
            level=getattr(logging, cfg.log_level),
            format="%(levelname)s %(name)s: %(message)s",
        )
        logging.getLogger().setLevel(getattr(logging, cfg.log_level))
        if cfg.parallelism < 1:
            raise UserInputError("parallelism must be >= 1")
        set_max_inflight(cfg.parallelism)
        logger.info("effective config: %s", cfg.describe())

        return args.func(args, cfg)
    except SystemExit as exc:  # argparse --help/--version
        return 0 if exc.code in (0, None) else 1
    except EndpointError as exc:
        logger.error("%s", exc)
        return 2
    except WorkbenchError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
