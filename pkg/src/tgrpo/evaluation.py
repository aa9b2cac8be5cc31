"""Answer ranking by probability-weighted rollouts and Hits@K reports."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .env import AnswerValue, Question
from .errors import ConfigError
from .graph import TemporalKG
from .policy import PolicyLike
from .retrieval import PruneConfig, Scorer, score_fact
from .sampling import derive_seed, sample_trajectory

HITS_KS = (1, 10)


@dataclass(frozen=True)
class RankedAnswers:
    """Deduplicated answers with accumulated weights, best first."""

    ranking: tuple[tuple[AnswerValue, float], ...]

    def rank_of(self, gold: frozenset[AnswerValue]) -> Optional[int]:
        """1-based position of the best-ranked gold answer, None if absent."""
        for i, (value, _) in enumerate(self.ranking, start=1):
            if value in gold:
                return i
        return None


@dataclass
class EvalReport:
    hits: dict[int, float]
    per_hop: dict[int, dict[int, float]]
    per_type: dict[str, dict[int, float]]
    n: int
    ranks: dict[str, Optional[int]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "per_hop": {
                str(h): {str(k): v for k, v in sorted(m.items())}
                for h, m in sorted(self.per_hop.items())
            },
            "per_type": {
                t: {str(k): v for k, v in sorted(m.items())}
                for t, m in sorted(self.per_type.items())
            },
        }


def rank_answers(
    policy: PolicyLike,
    kg: TemporalKG,
    q: Question,
    n_rollouts: int,
    temperature: float,
    max_depth: int,
    cfg: PruneConfig,
    rng_seed: int,
    scorer: Scorer = score_fact,
) -> RankedAnswers:
    """Sample rollouts; each sampled trajectory adds weight exp(sum of step
    log-probs) to its final answer. A trajectory sampled more than once
    counts once, so with enough rollouts the accumulated weights converge
    to the exact per-answer trajectory-probability mass. Unknown answers
    never enter the ranking; weights are normalized over the rollout set,
    and ties break by canonical answer order. All-Unknown rollouts produce
    an empty ranking.
    """
    if n_rollouts < 1:
        raise ConfigError("n_rollouts must be >= 1")
    weights: dict[AnswerValue, float] = {}
    seen: set[tuple] = set()
    total = 0.0
    for j in range(n_rollouts):
        rng = np.random.default_rng(derive_seed(rng_seed, q.id, "rollout", j))
        tr = sample_trajectory(kg, q, policy, temperature, max_depth, cfg, rng, scorer)
        key = tuple(
            (s.action.kind, s.action.target, s.action.value) for s in tr.steps
        )
        if key in seen:
            continue
        seen.add(key)
        w = math.exp(sum(step.log_prob for step in tr.steps)) if tr.steps else 0.0
        total += w
        if tr.final_answer.is_unknown():
            continue
        weights[tr.final_answer] = weights.get(tr.final_answer, 0.0) + w
    if total > 0:
        weights = {k: v / total for k, v in weights.items()}
    ranking = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankedAnswers(tuple(ranking))


def hits_at_k(ranks: Sequence[Optional[int]], k: int) -> float:
    """Fraction of questions whose gold rank is within k (None counts miss)."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if not ranks:
        return 0.0
    return sum(1 for r in ranks if r is not None and r <= k) / len(ranks)


def _hits_map(ranks: Sequence[Optional[int]]) -> dict[int, float]:
    return {k: hits_at_k(ranks, k) for k in HITS_KS}


def evaluate(
    policy: PolicyLike,
    kg: TemporalKG,
    questions: Sequence[Question],
    cfg: PruneConfig,
    n_rollouts: int = 16,
    temperature: float = 1.0,
    max_depth: int = 3,
    rng_seed: int = 0,
    scorer: Scorer = score_fact,
    workers: int = 1,
) -> EvalReport:
    """Rank every question and aggregate Hits@K overall and per hop/type.

    Per-question rng streams derive from (rng_seed, question id), so the
    report is identical for any worker count.
    """

    def one(q: Question) -> tuple[str, Optional[int]]:
        ranked = rank_answers(
            policy, kg, q, n_rollouts, temperature, max_depth, cfg, rng_seed, scorer
        )
        return q.id, ranked.rank_of(q.gold_answers)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, questions))
    else:
        results = [one(q) for q in questions]
    ranks_by_id = dict(results)

    all_ranks = [ranks_by_id[q.id] for q in questions]
    report = EvalReport(
        hits=_hits_map(all_ranks),
        per_hop={},
        per_type={},
        n=len(questions),
        ranks=ranks_by_id,
    )
    hops_present = sorted({q.hop_count for q in questions if q.hop_count is not None})
    for h in hops_present:
        ranks = [ranks_by_id[q.id] for q in questions if q.hop_count == h]
        report.per_hop[h] = _hits_map(ranks)
    types_present = sorted({q.qtype for q in questions if q.qtype is not None})
    for t in types_present:
        ranks = [ranks_by_id[q.id] for q in questions if q.qtype == t]
        report.per_type[t] = _hits_map(ranks)
    return report
