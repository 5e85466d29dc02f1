"""Synthetic corpora with planted bridge documents.

Every query has a topic vocabulary and a bridge vocabulary. In-pool relevant
documents mix both and match the query lexically; bridge documents carry only
the bridge vocabulary, so BM25 never retrieves them, yet they sit close to
the in-pool relevant documents in embedding space. A planted two-step plan
(query topic, then bridge vocabulary) lets a scripted reranker stand in for
a trained model.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from repair.corpus import Document, Query, write_jsonl
from repair.evaluation import write_qrels
from repair.planner import ScriptEntry

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SyntheticSpec:
    n_queries: int = 50
    in_pool: int = 3
    bridges: int = 2
    distractors: int = 50
    general_vocab: int = 20
    topic_words: int = 4
    bridge_words: int = 4
    query_general: int = 3
    relevant_general: int = 4
    distractor_general: int = 8
    filler_words: int = 2
    seed: int = 13


@dataclass
class SyntheticCorpus:
    docs: list[Document]
    queries: list[Query]
    qrels: dict[str, dict[str, int]]
    bridge_qrels: dict[str, dict[str, int]]
    script: dict[str, ScriptEntry]
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)

    def write(self, root: str | Path) -> dict[str, Path]:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": root / "corpus.jsonl",
            "queries": root / "queries.jsonl",
            "qrels": root / "qrels.txt",
            "bridge_qrels": root / "bridge_qrels.txt",
            "script": root / "script.jsonl",
        }
        write_jsonl(paths["corpus"], ({"id": d.doc_id, "text": d.text} for d in self.docs))
        write_jsonl(paths["queries"], ({"id": q.query_id, "text": q.text} for q in self.queries))
        write_qrels(self.qrels, paths["qrels"])
        write_qrels(self.bridge_qrels, paths["bridge_qrels"])
        write_jsonl(paths["script"], (
            {"query_id": qid, "steps": list(e.steps), "rule": e.rule, "step": e.step}
            for qid, e in self.script.items()
        ))
        return paths


class _Words:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def fresh(self, n: int) -> list[str]:
        out = []
        while len(out) < n:
            w = "".join(self.rng.choice(_CONSONANTS) + self.rng.choice(_VOWELS) for _ in range(3))
            if w not in self.used:
                self.used.add(w)
                out.append(w)
        return out


def generate(spec: SyntheticSpec | None = None) -> SyntheticCorpus:
    spec = spec or SyntheticSpec()
    rng = random.Random(spec.seed)
    words = _Words(rng)
    general = words.fresh(spec.general_vocab)

    raw: list[tuple[str, str, str]] = []  # (role key, query key, text)
    queries, script = [], {}
    for q in range(spec.n_queries):
        qid = f"q{q:03d}"
        topic = words.fresh(spec.topic_words)
        bridge = words.fresh(spec.bridge_words)
        q_general = rng.sample(general, spec.query_general)
        queries.append(Query(qid, " ".join(topic + q_general)))
        script[qid] = ScriptEntry((" ".join(topic + q_general), " ".join(bridge)), "cosine", 1)
        for _ in range(spec.in_pool):
            tokens = rng.sample(topic, spec.topic_words - 1) + bridge \
                + rng.sample(general, spec.relevant_general)
            rng.shuffle(tokens)
            raw.append(("rel", qid, " ".join(tokens)))
        for _ in range(spec.bridges):
            tokens = bridge + words.fresh(spec.filler_words)
            rng.shuffle(tokens)
            raw.append(("bridge", qid, " ".join(tokens)))
    for _ in range(spec.distractors):
        tokens = rng.sample(general, spec.distractor_general) + words.fresh(spec.filler_words)
        rng.shuffle(tokens)
        raw.append(("noise", "", " ".join(tokens)))

    rng.shuffle(raw)
    docs = []
    qrels: dict[str, dict[str, int]] = {q.query_id: {} for q in queries}
    bridge_qrels: dict[str, dict[str, int]] = {q.query_id: {} for q in queries}
    for i, (role, qid, text) in enumerate(raw):
        doc_id = f"d{i:04d}"
        docs.append(Document(doc_id, text))
        if role in ("rel", "bridge"):
            qrels[qid][doc_id] = 1
        if role == "bridge":
            bridge_qrels[qid][doc_id] = 1
    return SyntheticCorpus(docs, queries, qrels, bridge_qrels, script, spec)
