"""Multi-trajectory sampling and cold-start supervised training.

Trajectories are rolled out per question across a set of temperatures;
the ones whose final answer matches gold become step-level supervised
instances, and the policy is fit to them by mini-batch NLL descent. The
step records double as an export format for external fine-tuning
toolchains.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, RemotePolicyError
from .env import (
    ANSWER,
    Action,
    AnswerValue,
    Question,
    ReasoningState,
    UNKNOWN,
    masked_candidates,
    apply_hop,
    candidate_actions,
    initial_state,
)
from .graph import TemporalKG
from .policy import (
    DEFAULT_MAX_DEPTH,
    PolicyLike,
    PolicyParams,
    log_prob_and_grad,
)
from .retrieval import PruneConfig, Scorer, score_fact

TERM_ANSWER = "answer"
TERM_DEPTH_LIMIT = "depth_limit"
TERM_ERROR = "error"


@dataclass(frozen=True)
class TrajectoryStep:
    """One recorded decision: the state it was taken in, and its log-prob.

    `masked` marks steps taken at the depth limit, where hop candidates
    were removed before sampling; replay must apply the same mask.
    """

    state: ReasoningState
    action: Action
    log_prob: float
    masked: bool = False

    def candidates(self) -> list[Action]:
        if self.masked:
            return masked_candidates(self.state)
        return candidate_actions(self.state)

    def digest(self) -> tuple:
        return self.state.digest()


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[TrajectoryStep, ...]
    final_answer: AnswerValue
    temperature: float
    terminated_by: str

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class TrajectorySet:
    question: Question
    trajectories: tuple[Trajectory, ...]

    @property
    def size(self) -> int:
        return len(self.trajectories)


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit stream seed from a master seed and context labels."""
    h = hashlib.sha256(repr((int(master_seed),) + parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


def sample_trajectory(
    kg: TemporalKG,
    q: Question,
    policy: PolicyLike,
    temperature: float,
    max_depth: int,
    cfg: PruneConfig,
    rng: np.random.Generator,
    scorer: Scorer = score_fact,
) -> Trajectory:
    """Roll out one trajectory; every trajectory ends with an answer.

    Hops are masked on the last state the depth budget allows (with
    max_depth = 1 the initial state is already answer-only), so the policy
    is forced to answer (possibly Unknown) there and a trajectory holds at
    most max_depth decisions. A remote protocol failure marks the
    trajectory failed instead of raising.
    """
    if max_depth < 1:
        raise ConfigError(f"max_depth must be >= 1, got {max_depth}")
    state = initial_state(kg, q, cfg, scorer)
    steps: list[TrajectoryStep] = []
    while True:
        masked = state.depth >= max_depth - 1
        cands = masked_candidates(state) if masked else candidate_actions(state)
        try:
            action, log_prob = policy.act(state, temperature, rng, cands)
        except RemotePolicyError:
            return Trajectory(
                steps=tuple(steps),
                final_answer=UNKNOWN,
                temperature=temperature,
                terminated_by=TERM_ERROR,
            )
        steps.append(TrajectoryStep(state, action, log_prob, masked))
        if action.is_answer:
            return Trajectory(
                steps=tuple(steps),
                final_answer=action.value,
                temperature=temperature,
                terminated_by=TERM_DEPTH_LIMIT if masked else TERM_ANSWER,
            )
        state = apply_hop(kg, state, action, cfg, scorer)


def sample_multi(
    kg: TemporalKG,
    q: Question,
    policy: PolicyLike,
    temps: Sequence[float],
    per_temp: int,
    max_depth: int,
    cfg: PruneConfig,
    master_seed: int,
    scorer: Scorer = score_fact,
) -> TrajectorySet:
    """M = len(temps) * per_temp trajectories, one rng stream each."""
    if not temps:
        raise ConfigError("temps must be nonempty")
    trajectories: list[Trajectory] = []
    for t in temps:
        for replica in range(per_temp):
            rng = np.random.default_rng(derive_seed(master_seed, q.id, t, replica))
            trajectories.append(
                sample_trajectory(kg, q, policy, t, max_depth, cfg, rng, scorer)
            )
    return TrajectorySet(question=q, trajectories=tuple(trajectories))


def filter_positive(tset: TrajectorySet) -> list[Trajectory]:
    """Trajectories whose final answer matched gold, order preserved."""
    gold = tset.question.gold_answers
    return [tr for tr in tset.trajectories if tr.final_answer in gold]


@dataclass(frozen=True)
class SftInstance:
    question_id: str
    trajectory_index: int
    step_index: int
    step: TrajectoryStep


@dataclass(frozen=True)
class SftDataset:
    instances: tuple[SftInstance, ...]

    def __len__(self) -> int:
        return len(self.instances)


def build_sft_dataset(
    positives_per_question: Iterable[tuple[Question, Sequence[Trajectory]]],
) -> SftDataset:
    """One instance per step of every positive trajectory."""
    instances: list[SftInstance] = []
    for q, positives in positives_per_question:
        for j, tr in enumerate(positives):
            for k, step in enumerate(tr.steps):
                instances.append(SftInstance(q.id, j, k, step))
    return SftDataset(tuple(instances))


def _dataset_nll(
    params: PolicyParams, data: SftDataset, max_depth: int
) -> float:
    total = 0.0
    for inst in data.instances:
        lp, _ = log_prob_and_grad(
            params,
            inst.step.state,
            inst.step.action,
            temperature=1.0,
            max_depth=max_depth,
            candidates=inst.step.candidates(),
        )
        total -= lp
    return total / len(data.instances)


def train_sft(
    params: PolicyParams,
    data: SftDataset,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 32,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> tuple[PolicyParams, list[float]]:
    """Mini-batch gradient descent on mean NLL of the recorded actions.

    Returns the fitted parameters and the loss trace: the full-dataset NLL
    before training followed by one entry per epoch.
    """
    if len(data) == 0:
        raise ConfigError("SFT dataset is empty")
    weights = params.weights.copy()
    losses = [_dataset_nll(PolicyParams(weights), data, max_depth)]
    order = np.arange(len(data))
    for _ in range(epochs):
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            grad = np.zeros_like(weights)
            snapshot = PolicyParams(weights)
            for i in batch:
                inst = data.instances[i]
                _, g = log_prob_and_grad(
                    snapshot,
                    inst.step.state,
                    inst.step.action,
                    temperature=1.0,
                    max_depth=max_depth,
                    candidates=inst.step.candidates(),
                )
                grad -= g
            weights = weights - lr * grad / len(batch)
        losses.append(_dataset_nll(PolicyParams(weights), data, max_depth))
    return PolicyParams(weights), losses


def export_sft_dataset(data: SftDataset, path: str) -> None:
    """Write instances as line-delimited JSON for external fine-tuning.

    Per line: {"qid", "question", "history", "subgraph", "central",
    "candidates", "choice", "rationale"}; facts and candidates use their
    deterministic text renderings.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for inst in data.instances:
            state = inst.step.state
            kg = state.kg
            cands = inst.step.candidates()
            rec = {
                "qid": inst.question_id,
                "question": state.question.text,
                "history": [kg.verbalize(f) for f in state.history],
                "subgraph": [kg.verbalize(f) for f in state.subgraph],
                "central": kg.entity_label(state.central),
                "candidates": [a.render(kg) for a in cands],
                "choice": cands.index(inst.step.action),
                "rationale": inst.step.action.rationale,
            }
            fh.write(json.dumps(rec) + "\n")
