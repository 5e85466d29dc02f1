from repair.corpus import CachedEmbedder, DocStore, MockEmbedder, bm25_build
from repair.graph import build_graph
from repair.pipeline import PipelineDeps
from repair.planner import ScriptedReranker


def make_deps(docs, script=None, degree=16, graph=True, dim=256):
    embedder = CachedEmbedder(MockEmbedder(dim))
    vectors = dict(zip([d.doc_id for d in docs], embedder.embed_many([d.full_text for d in docs])))
    g = build_graph(docs, vectors, degree) if graph else None
    return PipelineDeps(bm25_build(docs), DocStore(docs), embedder,
                        ScriptedReranker(embedder, script), g)


class EmptyGraph:
    """Graph handle with no edges: disables expansion."""

    def neighbors(self, seeds, exclude=()):
        return []


class CountingGraph:
    """Wraps a graph and records every neighbour lookup."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def neighbors(self, seeds, exclude=()):
        self.calls.append(list(seeds))
        return self.inner.neighbors(seeds, exclude)
