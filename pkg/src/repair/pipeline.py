"""Sliding-window plan-and-rerank loop with reward-guided graph expansion."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from repair.corpus import Bm25Index, DocStore, Query, bm25_search, cosine_sim
from repair.planner import Plan, plan_and_rerank
from repair.rewards import PreferenceLedger, StepReward, ledger_record, score_steps, select_step

log = logging.getLogger(__name__)

MODES = ("repair", "psr_only", "standard_nar")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    window_size: int = 20
    carry: int = 10
    total_windows: int = 9
    graph_degree: int = 16
    mode: str = "repair"
    con_warmup_windows: int = 5
    reuse_plan: bool = False
    ablate_base: bool = False
    ablate_con: bool = False
    first_stage_depth: int = 100
    neighbor_pool_filter: int | None = None

    def validate(self) -> PipelineConfig:
        b, k, n = self.window_size, self.carry, self.total_windows
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not 1 <= k < b:
            raise ConfigError(f"need 1 <= carry < window_size, got carry={k}, window_size={b}")
        if n < 1:
            raise ConfigError(f"total_windows must be >= 1, got {n}")
        if self.graph_degree < 1:
            raise ConfigError(f"graph_degree must be >= 1, got {self.graph_degree}")
        if self.con_warmup_windows < 0:
            raise ConfigError("con_warmup_windows must be >= 0")
        needed = b + (n - 1) * (b - k)
        if self.first_stage_depth < needed:
            raise ConfigError(
                f"first_stage_depth={self.first_stage_depth} cannot feed {n} windows "
                f"(needs >= {needed})"
            )
        if self.neighbor_pool_filter is not None and self.neighbor_pool_filter < 1:
            raise ConfigError("neighbor_pool_filter must be >= 1 when set")
        return self

    @property
    def refill_size(self) -> int:
        return self.window_size - self.carry

    @property
    def last_standard_window(self) -> int:
        """Windows up to this one are filled from the first stage in every mode."""
        return math.ceil(self.total_windows / 2)

    @property
    def effective_mode(self) -> str:
        if self.mode == "repair" and self.ablate_base and self.ablate_con:
            return "psr_only"
        return self.mode


@dataclass
class PipelineDeps:
    index: Bm25Index
    docs: DocStore
    embedder: object
    reranker: object
    graph: object | None = None


@dataclass
class WindowRecord:
    window: int
    docs: list[str]
    ranking: list[str]
    plan: list[str]
    rewards: list[StepReward]
    selected_step: int
    refill_source: str | None = None
    refill: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rewards"] = [
            {"step": r.step_index, "r_base": r.r_base, "r_con": r.r_con,
             "r_total": r.r_total, "con_active": r.con_active}
            for r in self.rewards
        ]
        return d


@dataclass
class RunResult:
    query_id: str
    final_ranking: list[tuple[str, float]]
    trace: list[WindowRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.final_ranking]


class _FirstStage:
    """Cursor over first-stage results that skips anything already seen."""

    def __init__(self, ranked: Sequence[str], seen: set[str]):
        self.ranked = list(ranked)
        self.seen = seen

    def peek(self, n: int) -> list[str]:
        return self.remaining()[:n]

    def remaining(self) -> list[str]:
        return [d for d in self.ranked if d not in self.seen]


def _mark(seen: set[str], ids: Sequence[str]) -> None:
    for d in ids:
        if d in seen:
            raise AssertionError(f"document {d!r} would enter a second window")
        seen.add(d)


class QueryRun:
    """State machine for one query; see ``run_query``."""

    def __init__(self, query: Query, cfg: PipelineConfig, deps: PipelineDeps):
        self.query = query
        self.cfg = cfg
        self.deps = deps
        self.mode = cfg.effective_mode
        self.ledger = PreferenceLedger()
        self.seen: set[str] = set()
        self.demoted: list[str] = []
        self.plan_history: list[Plan] = []
        self.trace: list[WindowRecord] = []
        ranked = [d for d, _ in bm25_search(deps.index, query, cfg.first_stage_depth)]
        self.first_stage = _FirstStage(ranked, self.seen)
        if self.mode != "psr_only" and deps.graph is None and cfg.total_windows > cfg.last_standard_window:
            raise ConfigError(f"mode {self.mode!r} needs a corpus graph")
        if cfg.neighbor_pool_filter is not None:
            self.pool_filter: set[str] | None = set(ranked[:cfg.neighbor_pool_filter])
        else:
            self.pool_filter = None

    def run(self) -> RunResult:
        cfg = self.cfg
        window = self.first_stage.peek(cfg.window_size)
        _mark(self.seen, window)
        final: list[str] = []
        for i in range(1, cfg.total_windows + 1):
            if not window:
                break
            ranking, plan = self._rerank(window, i)
            ranked_docs = [self.deps.docs[d] for d in ranking]
            con_active = not cfg.ablate_con and i > cfg.con_warmup_windows
            rewards = score_steps(plan, ranked_docs, self.ledger, con_active,
                                  self.deps.embedder, use_base=not cfg.ablate_base)
            selected = select_step(rewards)
            # consensus for window i reflects windows 1..i-1 only
            ledger_record(self.ledger, ranking)
            record = WindowRecord(i, list(window), list(ranking), plan.texts, rewards, selected)
            self.trace.append(record)
            if i == cfg.total_windows:
                final = ranking
                break
            kept = ranking[:cfg.carry]
            self.demoted = ranking[cfg.carry:] + self.demoted
            step_text = plan.steps[selected - 1].text
            refill, source = self._refill(i + 1, kept, step_text)
            _mark(self.seen, refill)
            record.refill, record.refill_source = refill, source
            window = kept + refill
        ordered = final + self.demoted + self.first_stage.remaining()
        n = len(ordered)
        return RunResult(self.query.query_id,
                         [(d, float(n - pos)) for pos, d in enumerate(ordered)], self.trace)

    def _rerank(self, window: list[str], i: int) -> tuple[list[str], Plan]:
        docs = [self.deps.docs[d] for d in window]
        out = plan_and_rerank(self.query, docs, self.deps.reranker, i)
        plan = out.plan
        if self.cfg.reuse_plan and self.plan_history:
            plan = Plan(self.plan_history[0].steps, i)
        self.plan_history.append(plan)
        return out.ranking, plan

    def _neighbors(self, seeds: list[str]) -> list[tuple[str, float]]:
        nbrs = self.deps.graph.neighbors(seeds, self.seen)
        if self.pool_filter is not None:
            nbrs = [(d, s) for d, s in nbrs if d in self.pool_filter]
        return nbrs

    def _refill(self, target: int, kept: list[str], step_text: str) -> tuple[list[str], str]:
        """Choose the ``b - k`` new documents for window ``target``."""
        cfg = self.cfg
        size = cfg.refill_size
        adaptive = target > cfg.last_standard_window
        if not adaptive or self.mode == "psr_only" or not kept:
            return self.first_stage.peek(size), "first_stage"

        if self.mode == "standard_nar":
            if target % 2 != 0:
                return self.first_stage.peek(size), "first_stage"
            nbrs = [d for d, _ in self._neighbors(kept)][:size]
            if not nbrs:
                return self.first_stage.peek(size), "first_stage_fallback"
            if len(nbrs) < size:
                topup = [d for d in self.first_stage.peek(size) if d not in nbrs]
                nbrs += topup[:size - len(nbrs)]
            return nbrs, "graph"

        # step-adaptive: pool of graph neighbours and the next first-stage
        # candidates, ranked by similarity to the selected step
        fs_next = self.first_stage.peek(size)
        fs_set = set(fs_next)
        graph_only = [d for d, _ in self._neighbors(kept) if d not in fs_set]
        pool = fs_next + graph_only
        if not pool:
            return [], "step"
        embedder = self.deps.embedder
        step_vec = embedder.embed(step_text)
        vecs = embedder.embed_many([self.deps.docs[d].full_text for d in pool])
        sims = {d: cosine_sim(step_vec, v) for d, v in zip(pool, vecs)}
        chosen = set(sorted(pool, key=lambda d: (-sims[d], d))[:size])
        refill = [d for d in fs_next if d in chosen]
        refill += sorted((d for d in graph_only if d in chosen), key=lambda d: (-sims[d], d))
        return refill, "step"


def run_query(query: Query, cfg: PipelineConfig, deps: PipelineDeps) -> RunResult:
    cfg.validate()
    return QueryRun(query, cfg, deps).run()


def run_workload(queries: Sequence[Query], cfg: PipelineConfig, deps: PipelineDeps,
                 workers: int = 1) -> list[RunResult]:
    """Run every query; a failing query yields a result with ``error`` set."""
    cfg.validate()

    def one(q: Query) -> RunResult:
        try:
            res = QueryRun(q, cfg, deps).run()
        except Exception as exc:  # isolate per-query failures
            log.error("[%s] failed: %s", q.query_id, exc)
            return RunResult(q.query_id, [], error=f"{type(exc).__name__}: {exc}")
        log.info("[%s] done, %d windows, %d ranked", q.query_id, len(res.trace), len(res.final_ranking))
        return res

    if workers <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, queries))


def write_run_file(results: Sequence[RunResult], path: str | Path, run_tag: str = "repair") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            for rank, (doc_id, score) in enumerate(res.final_ranking, start=1):
                fh.write(f"{res.query_id} Q0 {doc_id} {rank} {score:.4f} {run_tag}\n")


def write_trace(result: RunResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result.trace:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def write_reward_trace(result: RunResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result.trace:
            for r in rec.rewards:
                fh.write(json.dumps({
                    "window": rec.window, "step": r.step_index, "r_base": r.r_base,
                    "r_con": r.r_con, "r_total": r.r_total,
                    "selected": r.step_index == rec.selected_step,
                }, sort_keys=True) + "\n")


def standard_nar_refill(run: QueryRun, target: int, kept: list[str]) -> tuple[list[str], str]:
    """Refill for ``target`` under standard neighbourhood expansion (no step involvement)."""
    if run.mode != "standard_nar":
        raise ConfigError("standard_nar_refill requires mode='standard_nar'")
    return run._refill(target, kept, "")
