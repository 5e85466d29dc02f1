"""Plan-adaptive reranking with step-selective corpus-graph expansion."""

from repair.corpus import (
    Bm25Index, CachedEmbedder, Document, DocStore, MockEmbedder, Query, RemoteEmbedder,
    bm25_build, bm25_search, cosine_sim, embed, load_corpus, load_queries, tokenize,
)
from repair.graph import CorpusGraph, build_graph, neighbors
from repair.pipeline import PipelineConfig, PipelineDeps, RunResult, run_query, run_workload
from repair.planner import Plan, ReasoningStep, RerankOutput, ScriptedReranker, ScriptEntry

__version__ = "0.1.0"
