"""Question/fact relevance scoring and top-P neighborhood pruning.

The default scorer is a deterministic lexical-overlap + temporal-match
blend; a remote scorer speaking the policy wire protocol's scoring
extension can be substituted through `make_scorer`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

from .errors import ConfigError
from .graph import Fact, TemporalKG

# Weights of the two score components.
LEXICAL_WEIGHT = 0.7
TEMPORAL_WEIGHT = 0.3

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_INTERVAL_RE = re.compile(r"\[(-?\d+), (-?\d+)\]")

Scorer = Callable[[str, str], float]


@dataclass(frozen=True)
class PruneConfig:
    """How many facts survive pruning; p must be >= 1."""

    p: int = 16

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError(f"prune size p must be >= 1, got {self.p}")


def tokens(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; punctuation acts as a separator."""
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=65536)
def _token_set(text: str) -> frozenset[str]:
    return frozenset(tokens(text))


def lexical_overlap(question: str, target_text: str) -> float:
    """|tokens(question) ∩ tokens(target)| / |tokens(question)|."""
    q = _token_set(question)
    if not q:
        return 0.0
    return len(q & _token_set(target_text)) / len(q)


@lru_cache(maxsize=8192)
def question_years(question: str) -> tuple[int, ...]:
    """All-digit tokens of the question, as candidate time values."""
    return tuple(int(t) for t in tokens(question) if t.isdigit())


def temporal_match(question: str, fact_text: str) -> float:
    """1.0 if any year-like question token falls inside the fact's interval.

    The interval is parsed back out of the fact's rendered "[start, end]"
    suffix; facts rendered without one never match.
    """
    m = _INTERVAL_RE.search(fact_text)
    if m is None:
        return 0.0
    start, end = int(m.group(1)), int(m.group(2))
    for year in question_years(question):
        if start <= year <= end:
            return 1.0
    return 0.0


@lru_cache(maxsize=65536)
def score_fact(question: str, fact_text: str) -> float:
    """Relevance of a verbalized fact to a question, in [0, 1]."""
    return (
        LEXICAL_WEIGHT * lexical_overlap(question, fact_text)
        + TEMPORAL_WEIGHT * temporal_match(question, fact_text)
    )


def prune_top_p(
    question: str,
    facts: Sequence[Fact],
    cfg: PruneConfig,
    kg: TemporalKG,
    scorer: Scorer = score_fact,
) -> list[Fact]:
    """Keep the min(p, len(facts)) highest-scoring facts.

    `facts` must already be in the deterministic neighborhood order; ties
    are broken by that order, and the output is sorted by (score descending,
    input position ascending). Pruning an already-pruned list with the same
    question and p returns it unchanged.
    """
    scored = [
        (-scorer(question, kg.verbalize(f)), i) for i, f in enumerate(facts)
    ]
    scored.sort()
    keep = scored[: min(cfg.p, len(scored))]
    return [facts[i] for _, i in keep]


def make_scorer(name: str, remote_url: str | None = None) -> Scorer:
    """Resolve a scorer by config name: "lexical" (default) or "remote"."""
    if name == "lexical":
        return score_fact
    if name == "remote":
        if not remote_url:
            raise ConfigError("scorer 'remote' requires a remote policy url")
        from .remote import RemoteScorer

        return RemoteScorer(remote_url)
    raise ConfigError(f"unknown scorer {name!r}")
