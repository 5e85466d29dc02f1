"""Retrieval and QA metrics, run/qrels file IO and report formatting."""

from __future__ import annotations

import json
import logging
import math
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from repair.corpus import Document, Query

log = logging.getLogger(__name__)

DEFAULT_METRICS = ("ndcg@10", "recall@100")


class EvalFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Ranking metrics


def ndcg_at_k(ranking: Sequence[str], qrels: Mapping[str, int], k: int) -> float:
    """Exponential-gain nDCG with a log2(rank + 1) discount."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gains = sorted((g for g in qrels.values() if g > 0), reverse=True)
    if not gains:
        return 0.0
    dcg = sum((2 ** qrels.get(d, 0) - 1) / math.log2(r + 2) for r, d in enumerate(ranking[:k]))
    idcg = sum((2 ** g - 1) / math.log2(r + 2) for r, g in enumerate(gains[:k]))
    return dcg / idcg


def recall_at_k(ranking: Sequence[str], qrels: Mapping[str, int], k: int) -> float | None:
    """Fraction of relevant documents in the top ``k``; None when nothing is relevant."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = {d for d, g in qrels.items() if g > 0}
    if not relevant:
        return None
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def parse_metric(name: str) -> tuple[str, int]:
    m = re.fullmatch(r"(ndcg|recall)@(\d+)", name.strip().lower())
    if not m or int(m.group(2)) < 1:
        raise ValueError(f"unknown metric {name!r}; use ndcg@K or recall@K")
    return m.group(1), int(m.group(2))


# ---------------------------------------------------------------------------
# QA metrics


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    text = re.sub(r"\b(a|an|the)\b", " ", text)
    return " ".join(text.split())


def exact_match(pred: str, golds: Sequence[str]) -> int:
    norm = normalize_answer(pred)
    if not norm:
        return 0
    return int(any(norm == normalize_answer(g) for g in golds))


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: Sequence[str]) -> float:
    pred_tokens = normalize_answer(pred).split()
    return max((_f1(pred_tokens, normalize_answer(g).split()) for g in golds), default=0.0)


@dataclass
class QaExample:
    query_id: str
    gold_answers: list[str]
    predicted: str

    def __post_init__(self) -> None:
        if not self.gold_answers:
            raise ValueError(f"{self.query_id}: gold_answers must be non-empty")


def evaluate_qa(examples: Sequence[QaExample]) -> dict:
    per_query = {
        ex.query_id: {"em": float(exact_match(ex.predicted, ex.gold_answers)),
                      "f1": token_f1(ex.predicted, ex.gold_answers)}
        for ex in sorted(examples, key=lambda e: e.query_id)
    }
    n = len(per_query)
    mean = {m: (sum(v[m] for v in per_query.values()) / n if n else 0.0) for m in ("em", "f1")}
    return {"per_query": per_query, "mean": mean}


QA_PROMPT = (
    "Answer the question using the context passages. "
    "Reply with a short answer only, no explanation."
)


def build_qa_messages(query: Query, top_docs: Sequence[Document]) -> list[dict]:
    lines = []
    if top_docs:
        lines.append("Context:")
        lines += [f"[{i}] {' '.join(d.full_text.split())}" for i, d in enumerate(top_docs, start=1)]
        lines.append("")
    lines.append(f"Question: {query.text}")
    lines.append("Answer:")
    return [{"role": "system", "content": QA_PROMPT}, {"role": "user", "content": "\n".join(lines)}]


def generate_answer(query: Query, top_docs: Sequence[Document], backend) -> str:
    return backend.complete(build_qa_messages(query, top_docs)).strip()


# ---------------------------------------------------------------------------
# Files


def read_run(path: str | Path) -> dict[str, list[str]]:
    """Ranked doc ids per query, ordered by score descending then rank."""
    rows: dict[str, list[tuple[float, int, str]]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise EvalFileError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _, doc_id, rank, score, _ = parts
            try:
                rows[qid].append((-float(score), int(rank), doc_id))
            except ValueError:
                raise EvalFileError(f"{path}:{lineno}: bad rank or score") from None
    return {qid: [d for *_, d in sorted(r)] for qid, r in rows.items()}


def read_qrels(path: str | Path) -> dict[str, dict[str, int]]:
    qrels: dict[str, dict[str, int]] = defaultdict(dict)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise EvalFileError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, doc_id, gain = parts
            try:
                g = int(gain)
            except ValueError:
                raise EvalFileError(f"{path}:{lineno}: gain must be an integer") from None
            if g < 0:
                raise EvalFileError(f"{path}:{lineno}: negative gain")
            if doc_id in qrels[qid]:
                raise EvalFileError(f"{path}:{lineno}: duplicate judgment for {qid}/{doc_id}")
            qrels[qid][doc_id] = g
    return dict(qrels)


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for doc_id in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {doc_id} {qrels[qid][doc_id]}\n")


def evaluate(run: Mapping[str, Sequence[str]], qrels: Mapping[str, Mapping[str, int]],
             metrics: Sequence[str] = DEFAULT_METRICS) -> dict:
    """Per-query scores and macro means over the judged queries.

    Queries absent from the run score 0. Recall skips queries with no
    relevant document, both per query and in the mean.
    """
    parsed = [(m, *parse_metric(m)) for m in metrics]
    per_query: dict[str, dict[str, float]] = {}
    for qid in sorted(qrels):
        ranking = run.get(qid)
        if ranking is None:
            log.warning("query %s missing from run; scored 0", qid)
            ranking = []
        row = {}
        for name, kind, k in parsed:
            if kind == "ndcg":
                row[name] = ndcg_at_k(ranking, qrels[qid], k)
            else:
                value = recall_at_k(ranking, qrels[qid], k)
                if value is None:
                    log.warning("query %s has no relevant documents; skipped for %s", qid, name)
                    continue
                row[name] = value
        per_query[qid] = row
    mean = {}
    for name, *_ in parsed:
        vals = [row[name] for row in per_query.values() if name in row]
        mean[name] = sum(vals) / len(vals) if vals else 0.0
    return {"metrics": [name for name, *_ in parsed], "per_query": per_query, "mean": mean}


def evaluate_run(run_path: str | Path, qrels_path: str | Path,
                 metrics: Sequence[str] = DEFAULT_METRICS) -> dict:
    return evaluate(read_run(run_path), read_qrels(qrels_path), metrics)


def format_report(report: dict) -> str:
    names = report["metrics"]
    qids = list(report["per_query"])
    width = max([len("query"), len("mean")] + [len(q) for q in qids])
    cols = [max(len(n), 8) for n in names]
    header = "query".ljust(width) + "".join("  " + n.rjust(c) for n, c in zip(names, cols))
    lines = [header, "-" * len(header)]

    def fmt(row: Mapping[str, float]) -> str:
        return "".join("  " + (f"{row[n]:.4f}" if n in row else "-").rjust(c) for n, c in zip(names, cols))

    for qid in qids:
        lines.append(qid.ljust(width) + fmt(report["per_query"][qid]))
    lines.append("-" * len(header))
    lines.append("mean".ljust(width) + fmt(report["mean"]))
    return "\n".join(lines) + "\n"


def write_report(report: dict, json_path: str | Path, text_path: str | Path | None = None) -> None:
    Path(json_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(format_report(report), encoding="utf-8")
