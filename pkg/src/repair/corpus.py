"""Corpus ingestion, tokenization, BM25 first-stage retrieval and embeddings."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from repair.cache import DiskCache, content_hash
from repair.remote import RemoteError, post_json

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
DEFAULT_DIM = 256

# Similarities are rounded before any ordering decision so that mathematically
# equal values compare equal regardless of summation order.
SIM_DECIMALS = 12

_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("document id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"document {self.doc_id!r} has empty text")

    @property
    def full_text(self) -> str:
        """Text used for embedding and prompting (title prepended when present)."""
        if self.title:
            return f"{self.title}: {self.text}"
        return self.text


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise CorpusError("query id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"query {self.query_id!r} has empty text")


def _read_records(path: str | Path, kind: str) -> list[tuple[int, dict]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed {kind} record ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("id"), str) \
                    or not isinstance(rec.get("text"), str):
                raise CorpusError(f"{path}:{lineno}: {kind} record needs string 'id' and 'text'")
            records.append((lineno, rec))
    return records


def load_corpus(path: str | Path) -> list[Document]:
    docs: list[Document] = []
    first_line: dict[str, int] = {}
    for lineno, rec in _read_records(path, "document"):
        doc_id = rec["id"]
        if doc_id in first_line:
            raise CorpusError(
                f"{path}:{lineno}: duplicate document id {doc_id!r} "
                f"(first seen on line {first_line[doc_id]})"
            )
        first_line[doc_id] = lineno
        title = rec.get("title")
        try:
            docs.append(Document(doc_id, rec["text"], title if isinstance(title, str) else None))
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return docs


def load_queries(path: str | Path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, rec in _read_records(path, "query"):
        if rec["id"] in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate query id {rec['id']!r}")
        seen.add(rec["id"])
        try:
            queries.append(Query(rec["id"], rec["text"]))
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return queries


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# BM25


def bm25_idf(doc_count: int, df: int) -> float:
    return math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))


@dataclass
class Bm25Index:
    doc_ids: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        return bm25_idf(self.doc_count, len(self.postings.get(term, ())))

    def search(self, query: Query | str, n: int) -> list[tuple[str, float]]:
        return bm25_search(self, query, n)

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths,
            "avg_doc_length": self.avg_doc_length,
            "postings": {t: [list(p) for p in plist] for t, plist in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> Bm25Index:
        return cls(
            doc_ids=list(data["doc_ids"]),
            postings={t: [(int(i), int(tf)) for i, tf in plist] for t, plist in data["postings"].items()},
            doc_lengths=[int(x) for x in data["doc_lengths"]],
            avg_doc_length=float(data["avg_doc_length"]),
            k1=float(data["k1"]),
            b=float(data["b"]),
        )

    def save(self, path: str | Path, **meta) -> None:
        payload = {"meta": meta, "index": self.to_dict()}
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Bm25Index:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8"))["index"])


def bm25_build(docs: Sequence[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    if not docs:
        raise CorpusError("cannot index an empty corpus")
    if k1 <= 0:
        raise CorpusError(f"k1 must be > 0, got {k1}")
    if not 0 <= b <= 1:
        raise CorpusError(f"b must lie in [0, 1], got {b}")
    postings: dict[str, list[tuple[int, int]]] = {}
    lengths = []
    for i, doc in enumerate(docs):
        tokens = tokenize(doc.full_text)
        lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((i, tf))
    return Bm25Index(
        doc_ids=[d.doc_id for d in docs],
        postings=postings,
        doc_lengths=lengths,
        avg_doc_length=sum(lengths) / len(lengths),
        k1=k1,
        b=b,
    )


def bm25_search(index: Bm25Index, query: Query | str, n: int) -> list[tuple[str, float]]:
    """Top-``n`` documents by Okapi BM25; unique query terms, zero scores dropped."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    text = query.text if isinstance(query, Query) else query
    avgdl = index.avg_doc_length or 1.0
    scores: dict[int, float] = {}
    for term in dict.fromkeys(tokenize(text)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index.doc_count, len(plist))
        for i, tf in plist:
            norm = index.k1 * (1.0 - index.b + index.b * index.doc_lengths[i] / avgdl)
            scores[i] = scores.get(i, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)
    ranked = sorted(
        ((index.doc_ids[i], s) for i, s in scores.items() if s > 0),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:n]


# ---------------------------------------------------------------------------
# Embeddings


def _stable_bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def _normalize(vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise CorpusError(f"{what}: expected a non-empty 1-d vector")
    if not np.all(np.isfinite(vec)):
        raise CorpusError(f"{what}: vector has non-finite entries")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise CorpusError(f"{what}: zero vector")
    return vec / norm


class MockEmbedder:
    """Hashed bag-of-tokens embedder; deterministic and network-free."""

    kind = "mock"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise CorpusError(f"embedding dim must be > 0, got {dim}")
        self.dim = dim

    @property
    def signature(self) -> str:
        return f"mock:{self.dim}"

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise CorpusError(f"cannot embed text without tokens: {text!r}")
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            vec[_stable_bucket(tok, self.dim)] += 1.0
        return _normalize(vec, "mock embedding")

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for an embedding service: POST {model, inputs} -> {vectors}."""

    kind = "remote"

    def __init__(self, endpoint: str, model: str, *, timeout: float = 30.0, retries: int = 2,
                 batch_size: int = 64, api_key: str | None = None, transport=None,
                 backoff: float = 0.5):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.batch_size = batch_size
        self.api_key = api_key
        self.transport = transport
        self.backoff = backoff

    @property
    def signature(self) -> str:
        return f"remote:{self.endpoint}:{self.model}"

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            data = post_json(self.endpoint, {"model": self.model, "inputs": batch},
                             timeout=self.timeout, retries=self.retries,
                             api_key=self.api_key, transport=self.transport,
                             backoff=self.backoff)
            vectors = data.get("vectors") if isinstance(data, dict) else None
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise RemoteError(self.endpoint, "response lacks one vector per input")
            try:
                out.extend(_normalize(np.asarray(v, dtype=np.float64), "remote embedding")
                           for v in vectors)
            except (CorpusError, TypeError, ValueError) as exc:
                raise RemoteError(self.endpoint, f"bad vector in response: {exc}") from None
        return out


class CachedEmbedder:
    """Memoizes an embedder in memory and, optionally, on disk by content hash.

    With ``refresh=True`` existing disk entries are ignored and overwritten.
    """

    def __init__(self, inner, cache_dir: str | Path | None = None, refresh: bool = False):
        self.inner = inner
        self.disk = DiskCache(cache_dir) if cache_dir is not None else None
        self.refresh = refresh
        self._memo: dict[str, np.ndarray] = {}

    @property
    def signature(self) -> str:
        return self.inner.signature

    @property
    def dim(self):
        return getattr(self.inner, "dim", None)

    def key(self, text: str) -> str:
        return content_hash({"embedder": self.inner.signature, "text": text})

    def lookup(self, text: str) -> np.ndarray | None:
        key = self.key(text)
        vec = self._memo.get(key)
        if vec is None and self.disk is not None and not self.refresh:
            raw = self.disk.get(key)
            if raw is not None:
                vec = np.asarray(json.loads(raw), dtype=np.float64)
                self._memo[key] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        found = {t: self.lookup(t) for t in dict.fromkeys(texts)}
        missing = [t for t, v in found.items() if v is None]
        if missing:
            for text, vec in zip(missing, self.inner.embed_many(missing)):
                key = self.key(text)
                self._memo[key] = vec
                if self.disk is not None:
                    self.disk.put(key, json.dumps(vec.tolist()))
                found[text] = vec
        return [found[t] for t in texts]


def embed(text: str, backend) -> np.ndarray:
    return backend.embed(text)


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    if u.shape != v.shape:
        raise CorpusError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise CorpusError("cosine similarity of a zero vector is undefined")
    sim = float(np.dot(u, v)) / (nu * nv)
    return round(min(1.0, max(-1.0, sim)), SIM_DECIMALS)


@dataclass
class DocStore:
    """Documents by id, in corpus order."""

    docs: list[Document]
    by_id: dict[str, Document] = field(init=False)

    def __post_init__(self) -> None:
        self.by_id = {d.doc_id: d for d in self.docs}

    def __getitem__(self, doc_id: str) -> Document:
        return self.by_id[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.by_id

    def __len__(self) -> int:
        return len(self.docs)
