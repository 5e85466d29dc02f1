"""Command line entry point: ``repair {index,graph,run,eval}``.

Exit codes: 0 success, 1 user error (bad input, missing files, failed
queries), 2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import traceback
from pathlib import Path

from repair import evaluation
from repair.cache import CacheError
from repair.config import ExperimentConfig, load_config
from repair.corpus import (
    Bm25Index, CachedEmbedder, CorpusError, DocStore, MockEmbedder, RemoteEmbedder, bm25_build,
    load_corpus, load_queries,
)
from repair.graph import CorpusGraph, GraphError, build_graph
from repair.pipeline import (
    MODES, ConfigError, PipelineDeps, run_workload, write_reward_trace, write_run_file, write_trace,
)
from repair.planner import ChatClient, RemoteReranker, ScriptedReranker, load_script
from repair.remote import RemoteError

log = logging.getLogger("repair")

INDEX_FILE = "index.json"
GRAPH_FILE = "graph.jsonl"
RUN_FILE = "run.txt"
RUN_META_FILE = "run_meta.json"


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path | None, what: str, hint: str = "") -> Path:
    if path is None:
        raise UserError(f"no {what} path configured")
    if not path.exists():
        raise UserError(f"{what} not found: {path}" + (f" ({hint})" if hint else ""))
    return path


def make_embedder(cfg: ExperimentConfig, no_cache: bool = False) -> CachedEmbedder:
    e = cfg.embedder
    if e.kind == "mock":
        inner = MockEmbedder(e.dim)
    else:
        inner = RemoteEmbedder(e.endpoint, e.model, timeout=e.timeout, retries=e.retries,
                               batch_size=e.batch_size)
    return CachedEmbedder(inner, cfg.cache_dir / "embeddings", refresh=no_cache)


def make_reranker(cfg: ExperimentConfig, embedder, no_cache: bool = False):
    r = cfg.reranker
    if r.kind == "scripted":
        script_path = cfg.path("script")
        script = load_script(_require(script_path, "script file")) if script_path else {}
        return ScriptedReranker(embedder, script)
    chat = ChatClient(r.endpoint, r.model, cache_dir=None if no_cache else cfg.cache_dir / "chat",
                      timeout=r.timeout, retries=r.retries, max_tokens=r.max_tokens)
    return RemoteReranker(chat, r.max_doc_chars)


def _load_docs(cfg: ExperimentConfig):
    path = _require(cfg.path("corpus"), "corpus file")
    docs = load_corpus(path)
    if not docs:
        raise UserError(f"corpus file {path} contains no documents")
    return path, docs


def cmd_index(cfg: ExperimentConfig, args) -> int:
    corpus_path, docs = _load_docs(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    embedder = make_embedder(cfg, args.no_cache)
    meta = {"corpus_sha256": _file_digest(corpus_path), "k1": cfg.bm25.k1, "b": cfg.bm25.b,
            "embedder": embedder.signature}
    index_path = out / INDEX_FILE
    texts = [d.full_text for d in docs]
    if not args.no_cache and index_path.exists():
        stored = json.loads(index_path.read_text(encoding="utf-8")).get("meta")
        if stored == meta and all(embedder.lookup(t) is not None for t in texts):
            print(f"index up to date ({len(docs)} documents), nothing to do")
            return 0
    index = bm25_build(docs, cfg.bm25.k1, cfg.bm25.b)
    index.save(index_path, **meta)
    embedder.embed_many(texts)
    print(f"indexed {len(docs)} documents, {len(index.postings)} terms -> {index_path} "
          f"({index_path.stat().st_size} bytes)")
    print(f"embedded {len(docs)} documents into {cfg.cache_dir / 'embeddings'}")
    return 0


def cmd_graph(cfg: ExperimentConfig, args) -> int:
    _, docs = _load_docs(cfg)
    embedder = make_embedder(cfg)
    vectors = {}
    for d in docs:
        vec = embedder.lookup(d.full_text)
        if vec is None:
            raise UserError(f"no cached embedding for document {d.doc_id!r}; run `repair index` first")
        vectors[d.doc_id] = vec
    degree = args.degree or cfg.pipeline.graph_degree
    graph = build_graph(docs, vectors, degree)
    path = cfg.output_dir / GRAPH_FILE
    graph.save(path)
    print(f"graph with degree {degree} over {len(docs)} documents -> {path}")
    return 0


def cmd_run(cfg: ExperimentConfig, args) -> int:
    if args.mode:
        cfg.pipeline.mode = args.mode
        cfg.pipeline.validate()
    out = cfg.output_dir
    index_path = _require(out / INDEX_FILE, "index", "run `repair index` first")
    _, docs = _load_docs(cfg)
    queries = load_queries(_require(cfg.path("queries"), "queries file"))
    graph = None
    if cfg.pipeline.effective_mode != "psr_only":
        graph = CorpusGraph.load(_require(out / GRAPH_FILE, "graph", "run `repair graph` first"))
    embedder = make_embedder(cfg, args.no_cache)
    deps = PipelineDeps(Bm25Index.load(index_path), DocStore(docs), embedder,
                        make_reranker(cfg, embedder, args.no_cache), graph)
    results = run_workload(queries, cfg.pipeline, deps, workers=cfg.workers)

    run_path = Path(args.output) if args.output else out / RUN_FILE
    write_run_file(results, run_path, cfg.run_tag)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    failed = []
    for res in results:
        if res.error:
            failed.append(res.query_id)
            print(f"[{res.query_id}] FAILED: {res.error}", flush=True)
            continue
        write_trace(res, trace_dir / f"{res.query_id}.jsonl")
        write_reward_trace(res, trace_dir / f"{res.query_id}.rewards.jsonl")
        print(f"[{res.query_id}] {len(res.trace)} windows, {len(res.final_ranking)} ranked", flush=True)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "queries": len(queries), "failed": failed}
    (out / RUN_META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {run_path}: {len(results) - len(failed)}/{len(results)} queries "
          f"(mode={cfg.pipeline.mode})")
    return 1 if failed else 0


def cmd_eval(cfg: ExperimentConfig | None, args) -> int:
    run_path = Path(args.run) if args.run else (cfg.output_dir / RUN_FILE if cfg else None)
    qrels_path = Path(args.qrels) if args.qrels else (cfg.path("qrels") if cfg else None)
    _require(run_path, "run file")
    _require(qrels_path, "qrels file")
    metrics = args.metric or list(evaluation.DEFAULT_METRICS)
    report = evaluation.evaluate_run(run_path, qrels_path, metrics)
    text = evaluation.format_report(report)
    print(text, end="")
    if args.json:
        evaluation.write_report(report, args.json, args.text)
    elif args.text:
        Path(args.text).write_text(text, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repair", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("-c", "--config", required=config_required, help="experiment config (YAML/JSON)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. pipeline.mode=psr_only")

    p = sub.add_parser("index", help="build the BM25 index and embed the corpus")
    common(p)
    p.add_argument("--no-cache", action="store_true", help="recompute embeddings and rebuild")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("graph", help="build the k-NN corpus graph from cached embeddings")
    common(p)
    p.add_argument("--degree", type=int, help="neighbours per document (default: pipeline.graph_degree)")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("run", help="rerank every query and write a run file")
    common(p)
    p.add_argument("--mode", choices=MODES, help="override pipeline.mode")
    p.add_argument("--output", help="run file path (default: <output_dir>/run.txt)")
    p.add_argument("--no-cache", action="store_true", help="bypass embedding and chat caches")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a run file against qrels")
    common(p, config_required=False)
    p.add_argument("run", nargs="?", help="run file (default: from config)")
    p.add_argument("qrels", nargs="?", help="qrels file (default: from config)")
    p.add_argument("--metric", action="append", help="metric such as ndcg@10 or recall@100 (repeatable)")
    p.add_argument("--json", help="write the JSON report here")
    p.add_argument("--text", help="write the plain-text table here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.config or args.command != "eval":
            cfg = load_config(args.config, args.set)
        return args.func(cfg, args)
    except (UserError, ConfigError, CorpusError, GraphError, evaluation.EvalFileError,
            RemoteError, CacheError, FileNotFoundError, ValueError) as exc:
        print(f"repair {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
