"""Dense per-step rewards and step selection.

Each reasoning step gets a baseline reward (how poorly the current top
documents cover it) and, once enough windows have been seen, a consistency
reward (how well the ranking the step alone would induce agrees with the
Bradley-Terry consensus of earlier windows). Their sum picks the step that
drives candidate expansion.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from repair.corpus import Document, cosine_sim
from repair.planner import Plan, ReasoningStep


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass
class PreferenceLedger:
    """Counts of how often one document was ranked above another."""

    above_counts: Counter = field(default_factory=Counter)
    windows_recorded: int = 0

    def count(self, p: str, q: str) -> int:
        return self.above_counts.get((p, q), 0)

    def record(self, ranking: Sequence[str]) -> PreferenceLedger:
        return ledger_record(self, ranking)


def ledger_record(ledger: PreferenceLedger, ranking: Sequence[str]) -> PreferenceLedger:
    if len(set(ranking)) != len(ranking):
        dup = next(d for d, c in Counter(ranking).items() if c > 1)
        raise ValueError(f"ranking lists {dup!r} more than once")
    for p, q in combinations(ranking, 2):
        ledger.above_counts[(p, q)] += 1
    ledger.windows_recorded += 1
    return ledger


def bt_probability(ledger: PreferenceLedger, p: str, q: str) -> float:
    """exp(g_pq) / (exp(g_pq) + exp(g_qp)).

    Evaluated as sigmoid of the count difference. The side with the larger
    count gets the sigmoid and the other side its exact complement, so that
    P(p>q) + P(q>p) == 1 holds in floating point.
    """
    if p == q:
        raise ValueError(f"preference of {p!r} over itself is undefined")
    diff = ledger.count(p, q) - ledger.count(q, p)
    hi = sigmoid(abs(diff))
    return hi if diff >= 0 else 1.0 - hi


def consistency_reward(ledger: PreferenceLedger, step_ranking: Sequence[str]) -> float:
    if len(step_ranking) < 2:
        raise ValueError("consistency needs at least two ranked documents")
    pairs = list(combinations(step_ranking, 2))
    return math.fsum(bt_probability(ledger, p, q) for p, q in pairs) / len(pairs)


def baseline_reward(sims: Sequence[float]) -> float:
    """Negative mean sigmoid similarity; higher means the step is less covered."""
    if len(sims) == 0:
        raise ValueError("baseline reward needs a non-empty window")
    return -math.fsum(sigmoid(s) for s in sims) / len(sims)


def base_reward(step_vector: np.ndarray, doc_vectors: Sequence[np.ndarray]) -> float:
    return baseline_reward([cosine_sim(step_vector, v) for v in doc_vectors])


def induced_ranking(step_vector: np.ndarray, doc_ids: Sequence[str],
                    doc_vectors: Sequence[np.ndarray]) -> list[str]:
    scored = [(d, cosine_sim(step_vector, v)) for d, v in zip(doc_ids, doc_vectors)]
    return [d for d, _ in sorted(scored, key=lambda x: (-x[1], x[0]))]


def step_induced_ranking(step: ReasoningStep, window: Sequence[Document], embedder) -> list[str]:
    if not window:
        raise ValueError("cannot rank an empty window")
    doc_vectors = embedder.embed_many([d.full_text for d in window])
    return induced_ranking(embedder.embed(step.text), [d.doc_id for d in window], doc_vectors)


@dataclass(frozen=True)
class StepReward:
    step_index: int
    r_base: float
    r_con: float
    con_active: bool

    @property
    def r_total(self) -> float:
        return self.r_base + self.r_con


def score_steps(plan: Plan, ranked_window: Sequence[Document], ledger: PreferenceLedger,
                con_active: bool, embedder, use_base: bool = True) -> list[StepReward]:
    """One reward per plan step; ``use_base=False`` zeroes the baseline term."""
    if not plan.steps:
        raise ValueError("plan has no steps")
    if not ranked_window:
        raise ValueError("cannot score steps against an empty window")
    doc_ids = [d.doc_id for d in ranked_window]
    doc_vectors = embedder.embed_many([d.full_text for d in ranked_window])
    step_vectors = embedder.embed_many(plan.texts)
    con_active = con_active and len(doc_ids) >= 2
    rewards = []
    for step, vec in zip(plan.steps, step_vectors):
        r_base = base_reward(vec, doc_vectors) if use_base else 0.0
        r_con = 0.0
        if con_active:
            r_con = consistency_reward(ledger, induced_ranking(vec, doc_ids, doc_vectors))
        rewards.append(StepReward(step.index, r_base, r_con, con_active))
    return rewards


def select_step(rewards: Sequence[StepReward]) -> int:
    """Index of the highest-reward step; the earliest step wins ties."""
    if not rewards:
        raise ValueError("no rewards to select from")
    return min(rewards, key=lambda r: (-r.r_total, r.step_index)).step_index
