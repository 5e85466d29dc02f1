import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import knn
from repair.corpus import Document, MockEmbedder, cosine_sim
from repair.graph import CorpusGraph, GraphError, build_graph, neighbors


def docs_and_vectors(points):
    docs = [Document(f"d{i:03d}", f"doc {i}") for i in range(len(points))]
    return docs, {d.doc_id: np.asarray(p, dtype=float) for d, p in zip(docs, points)}


def test_line_middle_picks_nearer_endpoint():
    # directions at 0, 30 and 90 degrees: the middle one is nearer the first
    angles = np.radians([0.0, 30.0, 90.0])
    docs, vecs = docs_and_vectors([[np.cos(a), np.sin(a)] for a in angles])
    g = build_graph(docs, vecs, degree=1)
    assert g.adjacency["d001"][0][0] == "d000"
    assert g.adjacency["d002"][0][0] == "d001"


def test_saturated_degree_lists_everyone():
    docs, vecs = docs_and_vectors(np.random.default_rng(0).normal(size=(6, 4)))
    g = build_graph(docs, vecs, degree=10)
    for d in docs:
        assert {n for n, _ in g.adjacency[d.doc_id]} == {o.doc_id for o in docs} - {d.doc_id}


def test_single_document():
    docs, vecs = docs_and_vectors([[1.0, 0.0]])
    assert build_graph(docs, vecs, 16).adjacency == {"d000": []}


def test_missing_embedding():
    docs, vecs = docs_and_vectors([[1.0, 0.0], [0.0, 1.0]])
    del vecs["d001"]
    with pytest.raises(GraphError, match="d001"):
        build_graph(docs, vecs, 2)


def test_bad_degree():
    docs, vecs = docs_and_vectors([[1.0, 0.0]])
    with pytest.raises(GraphError):
        build_graph(docs, vecs, 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60), st.integers(1, 20), st.integers(0, 10_000))
def test_matches_brute_force_knn(n, degree, seed):
    rng = np.random.default_rng(seed)
    # integer coordinates produce plenty of exact ties
    docs, vecs = docs_and_vectors(rng.integers(-2, 3, size=(n, 3)) + np.array([0.0, 0.0, 0.5]))
    g = build_graph(docs, vecs, degree)
    ids = [d.doc_id for d in docs]
    expected = knn(ids, [vecs[i] for i in ids], degree, cosine_sim)
    assert g.adjacency == expected
    for doc_id, nbrs in g.adjacency.items():
        assert doc_id not in {n for n, _ in nbrs}
        assert len(nbrs) <= degree


def test_brute_force_200_docs_mock_embeddings():
    rng = np.random.default_rng(3)
    vocab = [f"w{i}" for i in range(40)]
    docs = [Document(f"d{i:03d}", " ".join(rng.choice(vocab, size=6))) for i in range(200)]
    emb = MockEmbedder(32)
    vecs = {d.doc_id: emb.embed(d.text) for d in docs}
    g = build_graph(docs, vecs, 16)
    ids = [d.doc_id for d in docs]
    assert g.adjacency == knn(ids, [vecs[i] for i in ids], 16, cosine_sim)


class TestNeighbors:
    @pytest.fixture
    def graph(self):
        return CorpusGraph({
            "a": [("n", 0.9), ("x", 0.5)],
            "b": [("n", 0.7), ("y", 0.8), ("a", 0.1)],
            "n": [], "x": [], "y": [],
        }, degree=3)

    def test_single_seed_verbatim(self, graph):
        assert neighbors(graph, ["a"], set()) == [("n", 0.9), ("x", 0.5)]

    def test_max_dedup(self, graph):
        assert neighbors(graph, ["a", "b"], set()) == [("n", 0.9), ("y", 0.8), ("x", 0.5)]

    def test_seeds_excluded(self, graph):
        assert "a" not in {d for d, _ in neighbors(graph, ["b", "a"])}

    def test_exclude_all(self, graph):
        assert neighbors(graph, ["a"], {"n", "x"}) == []

    def test_unknown_seed(self, graph):
        with pytest.raises(GraphError, match="zz"):
            neighbors(graph, ["zz"])

    def test_no_seeds(self, graph):
        with pytest.raises(GraphError):
            neighbors(graph, [])

    def test_ties_by_id(self):
        g = CorpusGraph({"s": [("b", 0.5), ("a", 0.5)], "a": [], "b": []}, 2)
        assert neighbors(g, ["s"]) == [("a", 0.5), ("b", 0.5)]


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 25), st.integers(0, 1000), st.data())
def test_neighbors_disjoint_from_seeds_and_exclude(n, seed, data):
    rng = np.random.default_rng(seed)
    docs, vecs = docs_and_vectors(rng.normal(size=(n, 3)))
    g = build_graph(docs, vecs, 4)
    ids = [d.doc_id for d in docs]
    seeds = data.draw(st.lists(st.sampled_from(ids), min_size=1, max_size=4, unique=True))
    exclude = set(data.draw(st.lists(st.sampled_from(ids), max_size=6)))
    out = neighbors(g, seeds, exclude)
    got = [d for d, _ in out]
    assert not set(got) & (set(seeds) | exclude)
    assert len(got) == len(set(got))
    assert [s for _, s in out] == sorted((s for _, s in out), reverse=True)


def test_round_trip(tmp_path):
    docs, vecs = docs_and_vectors(np.random.default_rng(1).normal(size=(12, 5)))
    g = build_graph(docs, vecs, 4)
    g.save(tmp_path / "g.jsonl")
    again = CorpusGraph.load(tmp_path / "g.jsonl")
    assert again.adjacency == g.adjacency
    assert again.degree == 4
    again.save(tmp_path / "g2.jsonl")
    assert (tmp_path / "g.jsonl").read_bytes() == (tmp_path / "g2.jsonl").read_bytes()


def test_load_malformed(tmp_path):
    (tmp_path / "g.jsonl").write_text('{"doc": "a", "nbrs": [["b", 0.1]]}\n{"doc": 3}\n')
    with pytest.raises(GraphError, match=":2:"):
        CorpusGraph.load(tmp_path / "g.jsonl")
