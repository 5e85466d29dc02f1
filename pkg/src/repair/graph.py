"""Exact k-NN corpus graph over document embeddings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from repair.corpus import Document, cosine_sim

DEFAULT_DEGREE = 16


class GraphError(ValueError):
    pass


def _by_sim(item: tuple[str, float]) -> tuple[float, str]:
    return (-item[1], item[0])


@dataclass
class CorpusGraph:
    adjacency: dict[str, list[tuple[str, float]]]
    degree: int

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.adjacency

    def neighbors(self, seeds: Sequence[str], exclude: Iterable[str] = ()) -> list[tuple[str, float]]:
        return neighbors(self, seeds, exclude)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for doc_id, nbrs in self.adjacency.items():
                fh.write(json.dumps({"doc": doc_id, "nbrs": [[n, s] for n, s in nbrs]}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> CorpusGraph:
        adjacency: dict[str, list[tuple[str, float]]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    adjacency[rec["doc"]] = [(str(n), float(s)) for n, s in rec["nbrs"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    raise GraphError(f"{path}:{lineno}: malformed graph record") from None
        degree = max((len(v) for v in adjacency.values()), default=0)
        return cls(adjacency, degree)


def build_graph(docs: Sequence[Document], embeddings: Mapping[str, np.ndarray],
                degree: int = DEFAULT_DEGREE) -> CorpusGraph:
    """Each document's top-``degree`` other documents by cosine similarity (directed)."""
    if degree < 1:
        raise GraphError(f"degree must be >= 1, got {degree}")
    ids = [d.doc_id for d in docs]
    for doc_id in ids:
        if doc_id not in embeddings:
            raise GraphError(f"missing embedding for document {doc_id!r}")
    vecs = [embeddings[i] for i in ids]
    sims: list[list[tuple[str, float]]] = [[] for _ in ids]
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            s = cosine_sim(vecs[a], vecs[b])
            sims[a].append((ids[b], s))
            sims[b].append((ids[a], s))
    adjacency = {doc_id: sorted(row, key=_by_sim)[:degree] for doc_id, row in zip(ids, sims)}
    return CorpusGraph(adjacency, degree)


def neighbors(graph: CorpusGraph, seeds: Sequence[str], exclude: Iterable[str] = ()) -> list[tuple[str, float]]:
    """Union of the seeds' adjacency lists, keeping each document's best similarity."""
    if not seeds:
        raise GraphError("neighbors() needs at least one seed")
    blocked = set(exclude) | set(seeds)
    best: dict[str, float] = {}
    for seed in seeds:
        if seed not in graph.adjacency:
            raise GraphError(f"unknown seed document {seed!r}")
        for nbr, sim in graph.adjacency[seed]:
            if nbr in blocked:
                continue
            if nbr not in best or sim > best[nbr]:
                best[nbr] = sim
    return sorted(best.items(), key=_by_sim)
