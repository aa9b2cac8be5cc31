"""Trainable linear-softmax policy over hand-crafted decision features.

Each candidate action is embedded as an 8-dim feature vector; the policy
scores candidates with a single weight vector and samples from the
temperature-scaled softmax. Log-probabilities have closed-form gradients,
which is what makes the RL objective exactly checkable against finite
differences.

Feature layout (fixed order):
  0  lexical overlap between question and the action's target text
  1  temporal match flag for the action's time interval
  2  is-answer flag
  3  is-hop flag
  4  target-seen-in-history flag
  5  depth / max_depth
  6  relevance score of the action's source fact
  7  bias (1.0)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .errors import ConfigError, InvalidActionError, TgrpoError
from .env import Action, ReasoningState, candidate_actions
from .retrieval import lexical_overlap, question_years, score_fact

FEATURE_DIM = 8
DEFAULT_MAX_DEPTH = 3


@dataclass(frozen=True)
class PolicyParams:
    """Immutable weight snapshot."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (FEATURE_DIM,):
            raise ConfigError(f"weights must have shape ({FEATURE_DIM},), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ConfigError("weights must be finite")
        object.__setattr__(self, "weights", w)
        self.weights.setflags(write=False)

    @classmethod
    def zeros(cls) -> "PolicyParams":
        return cls(np.zeros(FEATURE_DIM))

    @classmethod
    def bootstrap_prior(cls) -> "PolicyParams":
        """Heuristic sampling prior: follow relevance, avoid revisits.

        Cold-start sampling needs a policy that finds some correct
        trajectories; this plays the role a pretrained language model plays
        in a full-scale system. It carries no answer/hop preference and no
        knowledge of any benchmark.
        """
        return cls(np.array([6.0, 1.0, 0.0, 0.0, -2.0, 0.0, 6.0, 0.0]))

    def nudged(self, delta: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.weights + delta)


def save_checkpoint(params: PolicyParams, path: str, meta: Optional[dict] = None):
    doc = {
        "dim": FEATURE_DIM,
        "weights": [float(w) for w in params.weights],
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path: str) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("dim") != FEATURE_DIM:
        raise ConfigError(f"{path}: checkpoint dim {doc.get('dim')} != {FEATURE_DIM}")
    return PolicyParams(np.asarray(doc["weights"], dtype=float))


def _target_text(state: ReasoningState, action: Action) -> str:
    if action.is_hop:
        return state.kg.entity_label(action.target)
    v = action.value
    if v.is_unknown():
        return ""
    return v.render(state.kg)


def _action_interval(action: Action):
    if action.is_answer and action.value is not None and action.value.kind == "time":
        return action.value.interval
    if action.source_fact is not None:
        return action.source_fact.time
    return None


def featurize(
    state: ReasoningState, action: Action, max_depth: int = DEFAULT_MAX_DEPTH
) -> np.ndarray:
    """Embed one (state, action) pair; deterministic, all entries in [0, 1]."""
    question = state.question.text
    phi = np.zeros(FEATURE_DIM)
    phi[0] = lexical_overlap(question, _target_text(state, action))

    interval = _action_interval(action)
    if interval is not None:
        years = question_years(question)
        phi[1] = 1.0 if any(interval.contains(y) for y in years) else 0.0

    phi[2] = 1.0 if action.is_answer else 0.0
    phi[3] = 1.0 if action.is_hop else 0.0

    if action.is_hop or (action.value is not None and action.value.kind == "entity"):
        target = action.target if action.is_hop else action.value.entity_id
        phi[4] = 1.0 if target in state.history_entities() else 0.0
    elif action.value is not None and action.value.kind == "time":
        phi[4] = 1.0 if action.value.interval in state.history_times() else 0.0

    phi[5] = state.depth / max_depth if max_depth > 0 else 0.0
    if action.source_fact is not None:
        phi[6] = score_fact(question, state.kg.verbalize(action.source_fact))
    phi[7] = 1.0
    return phi


def feature_matrix(
    state: ReasoningState,
    candidates: list[Action],
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> np.ndarray:
    """Stacked features for a candidate list.

    Memoized per state instance keyed on the candidate list's identity, so
    repeated evaluations during training do not re-featurize.
    """
    key = ("features", id(candidates), max_depth)
    cached = state.cache.get(key)
    if cached is None:
        cached = np.stack([featurize(state, a, max_depth) for a in candidates])
        cached.setflags(write=False)
        state.cache[key] = (cached, candidates)
        return cached
    return cached[0]


@dataclass(frozen=True)
class ActionDistribution:
    candidates: tuple[Action, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(p) != len(self.candidates) or len(p) < 1:
            raise TgrpoError("probs and candidates must align and be nonempty")
        if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise TgrpoError("probs must be a distribution")
        object.__setattr__(self, "probs", p)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


def _softmax(logits: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(logits)):
        raise TgrpoError("non-finite policy logits")
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def distribution(
    params: PolicyParams,
    state: ReasoningState,
    temperature: float = 1.0,
    max_depth: int = DEFAULT_MAX_DEPTH,
    candidates: Optional[list[Action]] = None,
) -> ActionDistribution:
    """Softmax over candidate logits <w, phi_i> / t (max-subtracted)."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if candidates is None:
        candidates = candidate_actions(state)
    phi = feature_matrix(state, candidates, max_depth)
    logits = phi @ params.weights / temperature
    return ActionDistribution(tuple(candidates), _softmax(logits))


def sample(dist: ActionDistribution, rng: np.random.Generator) -> tuple[Action, float]:
    """Inverse-CDF draw over the deterministic candidate order."""
    u = rng.random()
    cum = np.cumsum(dist.probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(dist.candidates) - 1)
    return dist.candidates[idx], float(np.log(dist.probs[idx]))


def log_prob_and_grad(
    params: PolicyParams,
    state: ReasoningState,
    action: Action,
    temperature: float = 1.0,
    max_depth: int = DEFAULT_MAX_DEPTH,
    candidates: Optional[list[Action]] = None,
) -> tuple[float, np.ndarray]:
    """log pi(action|state) and its exact weight gradient.

    grad = (phi(action) - sum_i p_i phi(i)) / t. Raises InvalidActionError
    when the action is not a candidate of the state.
    """
    if candidates is None:
        candidates = candidate_actions(state)
    try:
        idx = candidates.index(action)
    except ValueError:
        raise InvalidActionError(
            f"action {action!r} is not a candidate of this state"
        ) from None
    phi = feature_matrix(state, candidates, max_depth)
    logits = phi @ params.weights / temperature
    z = logits - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    probs = np.exp(log_probs)
    grad = (phi[idx] - probs @ phi) / temperature
    return float(log_probs[idx]), grad


class PolicyLike(Protocol):
    """Anything that can pick an action for a state at a temperature."""

    def act(
        self, state: ReasoningState, temperature: float, rng: np.random.Generator,
        candidates: Optional[list[Action]] = None,
    ) -> tuple[Action, float]: ...


class DeskPolicy:
    """Local linear-softmax policy; the trainable stand-in for an LLM."""

    def __init__(self, params: PolicyParams, max_depth: int = DEFAULT_MAX_DEPTH):
        self.params = params
        self.max_depth = max_depth

    def dist_for(
        self,
        state: ReasoningState,
        temperature: float,
        candidates: Optional[list[Action]] = None,
    ) -> ActionDistribution:
        """Expose the distribution so group sampling can reuse one softmax."""
        return distribution(self.params, state, temperature, self.max_depth, candidates)

    def act(
        self,
        state: ReasoningState,
        temperature: float,
        rng: np.random.Generator,
        candidates: Optional[list[Action]] = None,
    ) -> tuple[Action, float]:
        return sample(self.dist_for(state, temperature, candidates), rng)
