"""Plan-then-rank reranker boundary: prompt construction, output parsing, backends."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from repair.cache import DiskCache, content_hash
from repair.corpus import Document, Query, cosine_sim
from repair.remote import RemoteError, post_json

SYSTEM_PROMPT = (
    "You are an AI assistant that analyzes complex questions and identifies which documents "
    "best support answering them.\n"
    "Given a user's query and a set of documents, your task is to:\n"
    "1. Generate a reasoning trace, thinking step by step about what knowledge or types of "
    "information are necessary to answer the query. These should be abstract but specific "
    "enough to guide document selection.\n"
    "2. Select and rank at least 10 documents that best support the reasoning steps. Consider "
    "how each document contributes to the reasoning process. Order them from most to least "
    "useful using > between document IDs (e.g., [3] > [7]).\n"
    "\n"
    "Use the following format:\n"
    "\n"
    "[Reasoning Trace]\n"
    "Step 1: <First reasoning step>\n"
    "Step 2: <Second reasoning step>\n"
    "...\n"
    "Step N: <Final reasoning step>\n"
    "\n"
    "[Document Ranking]\n"
    "[9] > [5] > [6] > ... > [12]\n"
    "\n"
    "Only produce the output in the format shown above."
)

RANKING_HEADER = "[Document Ranking]"
TRACE_HEADER = "[Reasoning Trace]"

_STEP_RE = re.compile(r"^\s*step\s*(\d+)\s*[:.)-]\s*(.*?)\s*$", re.IGNORECASE)
_INDEX_RE = re.compile(r"\[\s*(\d+)\s*\]")


@dataclass(frozen=True)
class ReasoningStep:
    index: int
    text: str


@dataclass
class Plan:
    steps: list[ReasoningStep]
    window_index: int = 0

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.steps]

    @classmethod
    def from_texts(cls, texts: Sequence[str], window_index: int = 0) -> Plan:
        return cls([ReasoningStep(i, t) for i, t in enumerate(texts, start=1)], window_index)


@dataclass
class ParseDiagnostics:
    dropped: int = 0
    duplicated: int = 0
    appended: int = 0
    missing_section: bool = False
    synthesized_plan: bool = False


@dataclass
class RerankOutput:
    plan: Plan
    ranking: list[str]
    raw_text: str
    diagnostics: ParseDiagnostics = field(default_factory=ParseDiagnostics)


def _flatten(text: str) -> str:
    return " ".join(text.split())


def format_document(doc: Document, max_doc_chars: int | None = None) -> str:
    text = _flatten(doc.full_text)
    if max_doc_chars is not None:
        text = text[:max_doc_chars]
    return text


def build_prompt(query: Query, window: Sequence[Document],
                 max_doc_chars: int | None = None) -> tuple[str, str]:
    if not window:
        raise ValueError("cannot build a prompt for an empty window")
    lines = ["[Query]", query.text, "", "[Documents]"]
    lines += [f"[{i}]: {format_document(d, max_doc_chars)}" for i, d in enumerate(window, start=1)]
    return SYSTEM_PROMPT, "\n".join(lines)


def parse_output(raw: str, window: Sequence[str], query_text: str | None = None,
                 window_index: int = 0) -> RerankOutput:
    """Parse a reranker transcript into a plan and a full permutation of ``window``.

    Malformed output is repaired: out-of-range indices are dropped, repeated
    documents keep their first position, unmentioned documents are appended in
    window order, and an empty plan falls back to a single step holding the
    query text.
    """
    diag = ParseDiagnostics()
    pos = raw.rfind(RANKING_HEADER)
    if pos < 0:
        diag.missing_section = True
        trace, ranking_text = raw, ""
    else:
        trace, ranking_text = raw[:pos], raw[pos + len(RANKING_HEADER):]

    texts = []
    for line in trace.splitlines():
        m = _STEP_RE.match(line)
        if m and m.group(2):
            texts.append(m.group(2))
    if not texts:
        diag.synthesized_plan = True
        texts = [query_text.strip() if query_text and query_text.strip() else "relevant evidence"]
    plan = Plan.from_texts(texts, window_index)

    ranking: list[str] = []
    placed: set[str] = set()
    for m in _INDEX_RE.finditer(ranking_text):
        idx = int(m.group(1))
        if not 1 <= idx <= len(window):
            diag.dropped += 1
            continue
        doc_id = window[idx - 1]
        if doc_id in placed:
            diag.duplicated += 1
            continue
        placed.add(doc_id)
        ranking.append(doc_id)
    for doc_id in window:
        if doc_id not in placed:
            placed.add(doc_id)
            ranking.append(doc_id)
            diag.appended += 1
    return RerankOutput(plan, ranking, raw, diag)


def render_output(steps: Sequence[str], order: Sequence[int]) -> str:
    """Write a transcript in the reranker's output format (1-based window positions)."""
    lines = [TRACE_HEADER]
    lines += [f"Step {i}: {t}" for i, t in enumerate(steps, start=1)]
    lines += ["", RANKING_HEADER, " > ".join(f"[{i}]" for i in order)]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Backends


class ChatClient:
    """Cached, temperature-0 chat completion client.

    Wire format: POST {model, messages, temperature, max_tokens}; the response
    carries the completion in a ``text`` field.
    """

    def __init__(self, endpoint: str, model: str, *, cache_dir: str | Path | None = None,
                 timeout: float = 120.0, retries: int = 2, max_tokens: int = 2048,
                 api_key: str | None = None, transport=None, backoff: float = 0.5):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.max_tokens = max_tokens
        self.api_key = api_key
        self.transport = transport
        self.backoff = backoff
        self.cache = DiskCache(cache_dir, suffix=".txt") if cache_dir is not None else None

    def request(self, messages: list[dict]) -> dict:
        return {"model": self.model, "messages": messages, "temperature": 0,
                "max_tokens": self.max_tokens}

    def complete(self, messages: list[dict]) -> str:
        payload = self.request(messages)
        key = content_hash(payload)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        data = post_json(self.endpoint, payload, timeout=self.timeout, retries=self.retries,
                         api_key=self.api_key, transport=self.transport, backoff=self.backoff)
        text = data.get("text") if isinstance(data, dict) else None
        if not isinstance(text, str):
            raise RemoteError(self.endpoint, "response has no 'text' field")
        if self.cache is not None:
            self.cache.put(key, text)
        return text


class ScriptedChat:
    """Chat stand-in returning canned text; records every call."""

    def __init__(self, reply: str | Callable[[list[dict]], str]):
        self.reply = reply
        self.calls: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> str:
        self.calls.append(messages)
        return self.reply(messages) if callable(self.reply) else self.reply


class RemoteReranker:
    kind = "remote"

    def __init__(self, chat, max_doc_chars: int | None = None):
        self.chat = chat
        self.max_doc_chars = max_doc_chars

    def rerank(self, query: Query, window: Sequence[Document], window_index: int = 0) -> RerankOutput:
        system, user = build_prompt(query, window, self.max_doc_chars)
        raw = self.chat.complete([{"role": "system", "content": system},
                                  {"role": "user", "content": user}])
        return parse_output(raw, [d.doc_id for d in window], query.text, window_index)


@dataclass(frozen=True)
class ScriptEntry:
    """A planted plan and ranking rule for one query.

    ``rule`` is ``"cosine"`` (sort by similarity to step ``step``),
    ``"fixed"`` (apply ``permutation`` of 1-based window positions) or
    ``"window"`` (keep window order).
    """

    steps: tuple[str, ...]
    rule: str = "cosine"
    step: int = 1
    permutation: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a script entry needs at least one step")
        if self.rule not in ("cosine", "fixed", "window"):
            raise ValueError(f"unknown ranking rule {self.rule!r}")
        if self.rule == "cosine" and not 1 <= self.step <= len(self.steps):
            raise ValueError(f"step {self.step} out of range for {len(self.steps)} steps")

    @classmethod
    def from_dict(cls, data: Mapping) -> ScriptEntry:
        return cls(tuple(data["steps"]), data.get("rule", "cosine"), int(data.get("step", 1)),
                   tuple(int(p) for p in data.get("permutation", ())))


def load_script(path: str | Path) -> dict[str, ScriptEntry]:
    script = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                script[rec["query_id"]] = ScriptEntry.from_dict(rec)
    return script


def rank_by_similarity(vector, window: Sequence[Document], embedder) -> list[str]:
    """Window ids by cosine to ``vector`` descending; ties by ascending doc id."""
    vecs = embedder.embed_many([d.full_text for d in window])
    scored = [(d.doc_id, cosine_sim(vector, v)) for d, v in zip(window, vecs)]
    return [doc_id for doc_id, _ in sorted(scored, key=lambda x: (-x[1], x[0]))]


class ScriptedReranker:
    """Deterministic, network-free reranker driven by planted plans.

    ``script`` maps query ids to entries; queries without an entry get a
    one-step plan holding the query text and are ranked by cosine to it.
    The backend renders its decision in the real output format and parses it
    back, so it exercises the same parsing path as a remote model.
    """

    kind = "scripted"

    def __init__(self, embedder, script: Mapping[str, ScriptEntry] | Callable | None = None):
        self.embedder = embedder
        self.script = script or {}
        self.calls = 0

    def entry_for(self, query: Query, window: Sequence[Document]) -> ScriptEntry:
        if callable(self.script):
            entry = self.script(query, window)
        else:
            entry = self.script.get(query.query_id)
        return entry or ScriptEntry((query.text,))

    def rerank(self, query: Query, window: Sequence[Document], window_index: int = 0) -> RerankOutput:
        self.calls += 1
        entry = self.entry_for(query, window)
        ids = [d.doc_id for d in window]
        if entry.rule == "cosine":
            target = self.embedder.embed(entry.steps[entry.step - 1])
            ranked = rank_by_similarity(target, window, self.embedder)
            pos = {doc_id: i for i, doc_id in enumerate(ids, start=1)}
            order = [pos[d] for d in ranked]
        elif entry.rule == "fixed":
            order = list(entry.permutation)
        else:
            order = list(range(1, len(ids) + 1))
        raw = render_output(entry.steps, order)
        return parse_output(raw, ids, query.text, window_index)


def plan_and_rerank(query: Query, window: Sequence[Document], backend,
                    window_index: int = 0) -> RerankOutput:
    if not window:
        raise ValueError("cannot rerank an empty window")
    return backend.rerank(query, window, window_index)
