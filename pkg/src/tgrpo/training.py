"""Tree-group policy optimization with backward reward propagation.

Search builds a tree per question: at each node, g actions are sampled
from the frozen sampling policy. Answer actions score 1/0 against gold;
hop actions score the mean reward of the child group their subtree
produces, so sparse terminal rewards flow back to every decision point.
Each node's g members form one group record pushed to a buffer; training
drains the buffer, normalizes rewards within each group, and applies a
clipped ratio objective with a KL penalty toward the frozen reference.

The flat variant samples g whole trajectories per question with
terminal-only reward and broadcasts one advantage per trajectory; it is
the baseline the tree version is compared against.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, IntegrityError, InvalidActionError, RemotePolicyError
from .env import (
    Action,
    Question,
    ReasoningState,
    UNKNOWN,
    masked_candidates,
    apply_hop,
    candidate_actions,
    initial_state,
    terminal_reward,
)
from .graph import TemporalKG
from .policy import DeskPolicy, PolicyLike, PolicyParams, log_prob_and_grad, sample
from .retrieval import PruneConfig, Scorer, score_fact
from .sampling import Trajectory, sample_trajectory

logger = logging.getLogger(__name__)

LogFn = Callable[[dict], None]


@dataclass(frozen=True)
class SearchConfig:
    g: int = 4
    max_depth: int = 3
    prune: PruneConfig = field(default_factory=PruneConfig)
    search_temperature: float = 1.0
    group_budget: int = 64

    def __post_init__(self):
        if self.g < 2:
            raise ConfigError(f"group size g must be >= 2, got {self.g}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.group_budget < 1:
            raise ConfigError("group_budget must be >= 1")


@dataclass(frozen=True)
class GrpoConfig:
    eps_clip: float = 0.2
    beta_kl: float = 0.04
    mu: int = 2
    outer_steps: int = 100
    lr: float = 0.1
    std_floor: float = 1e-8
    gamma: float = 1.0
    questions_per_step: int = 8
    decision_budget: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.eps_clip < 1.0:
            raise ConfigError(f"eps_clip must be in (0, 1), got {self.eps_clip}")
        if self.mu < 1:
            raise ConfigError(f"mu must be >= 1, got {self.mu}")


@dataclass(frozen=True)
class GroupMember:
    """One sampled action at a tree node, with its propagated reward."""

    action: Action
    state: ReasoningState
    log_prob_old: float
    reward: float
    masked: bool = False
    failed: bool = False

    def candidates(self) -> list[Action]:
        if self.masked:
            return masked_candidates(self.state)
        return candidate_actions(self.state)


@dataclass(frozen=True)
class GroupRecord:
    members: tuple[GroupMember, ...]
    tree_path: tuple[int, ...]
    question_id: str
    temperature: float
    max_depth: int

    def rewards(self) -> np.ndarray:
        return np.array([m.reward for m in self.members], dtype=float)


class GroupBuffer:
    """Append-only record queue; appends are lock-safe, drain is not."""

    def __init__(self):
        self._records: list[GroupRecord] = []
        self._lock = threading.Lock()

    def append(self, record: GroupRecord) -> None:
        with self._lock:
            self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def drain(self) -> list[GroupRecord]:
        with self._lock:
            records, self._records = self._records, []
        return records

    def peek(self) -> list[GroupRecord]:
        return list(self._records)

    def dump(self, path: str) -> None:
        """Serialize current records as line-delimited JSON (tree inspect)."""
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self._records:
                fh.write(json.dumps(record_to_json(rec)) + "\n")


def record_to_json(rec: GroupRecord) -> dict:
    members = []
    for m in rec.members:
        qid, central, subgraph_ids, history_ids, depth = m.state.digest()
        members.append(
            {
                "action": m.action.render(m.state.kg),
                "reward": m.reward,
                "log_prob_old": m.log_prob_old,
                "masked": m.masked,
                "failed": m.failed,
                "central": central,
                "subgraph": list(subgraph_ids),
                "history": list(history_ids),
                "depth": depth,
            }
        )
    return {
        "tree_path": list(rec.tree_path),
        "question_id": rec.question_id,
        "temperature": rec.temperature,
        "max_depth": rec.max_depth,
        "members": members,
    }


def searching(
    policy_old: PolicyLike,
    state: ReasoningState,
    cfg: SearchConfig,
    buffer: GroupBuffer,
    kg: TemporalKG,
    rng: np.random.Generator,
    scorer: Scorer = score_fact,
) -> float:
    """Recursive tree-group search from `state`; returns the root's score.

    Per node, g actions are sampled. Answers score against gold; hops
    recurse, and a recursion that has already reached max_depth returns 0
    without sampling. Mirroring the trajectory sampler, hops are masked on
    the deepest expandable level, so the horizon is spent on answer
    decisions instead of subtrees the depth guard would zero out. Every
    node pushes exactly one group record; records arrive in post-order,
    root last. A per-tree group budget forces answer-only sampling once
    exceeded, bounding pathological expansions.
    """
    if state.depth >= cfg.max_depth:
        raise ConfigError("searching requires state.depth < max_depth at the root")
    question = state.question
    groups_created = [0]

    def recurse(node: ReasoningState, path: tuple[int, ...]) -> float:
        if node.depth >= cfg.max_depth:
            return 0.0
        groups_created[0] += 1
        over_budget = groups_created[0] > cfg.group_budget
        if over_budget:
            logger.warning(
                "group budget %d exceeded for question %s; forcing answers",
                cfg.group_budget,
                question.id,
            )
        masked = over_budget or node.depth >= cfg.max_depth - 1
        cands = masked_candidates(node) if masked else candidate_actions(node)
        # Desk policies expose their softmax; sample all g members from one
        # distribution instead of recomputing it per member. Remote policies
        # stay one call per member.
        dist = None
        dist_for = getattr(policy_old, "dist_for", None)
        if dist_for is not None:
            dist = dist_for(node, cfg.search_temperature, cands)
        members: list[GroupMember] = []
        for i in range(cfg.g):
            try:
                if dist is not None:
                    action, log_prob = sample(dist, rng)
                else:
                    action, log_prob = policy_old.act(
                        node, cfg.search_temperature, rng, cands
                    )
            except RemotePolicyError as exc:
                logger.warning(
                    "remote policy failed for question %s at %s: %s",
                    question.id,
                    path + (i,),
                    exc,
                )
                members.append(
                    GroupMember(
                        action=Action.answer(UNKNOWN, rationale="remote failure"),
                        state=node,
                        log_prob_old=0.0,
                        reward=0.0,
                        masked=masked,
                        failed=True,
                    )
                )
                continue
            if action.is_answer:
                score = terminal_reward(action, question)
            else:
                child = apply_hop(kg, node, action, cfg.prune, scorer)
                score = recurse(child, path + (i,))
            members.append(
                GroupMember(
                    action=action,
                    state=node,
                    log_prob_old=log_prob,
                    reward=score,
                    masked=masked,
                )
            )
        buffer.append(
            GroupRecord(
                members=tuple(members),
                tree_path=path,
                question_id=question.id,
                temperature=cfg.search_temperature,
                max_depth=cfg.max_depth,
            )
        )
        return float(np.mean([m.reward for m in members]))

    return recurse(state, ())


def compute_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    """Group-relative standardization with a degenerate-group guard.

    (r - mean) / popstd when popstd >= std_floor, else exact zeros.
    """
    r = np.asarray(rewards, dtype=float)
    std = float(r.std())
    if std < std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def _member_terms(
    params: PolicyParams,
    params_old: Optional[PolicyParams],
    params_ref: PolicyParams,
    state: ReasoningState,
    action: Action,
    candidates: list[Action],
    log_prob_old: Optional[float],
    advantage: float,
    temperature: float,
    max_depth: int,
    cfg: GrpoConfig,
) -> tuple[float, np.ndarray]:
    """Clipped surrogate minus KL penalty for one decision, with gradient."""
    try:
        logp, glogp = log_prob_and_grad(
            params, state, action, temperature, max_depth, candidates
        )
    except InvalidActionError as exc:
        raise IntegrityError(f"replay failed: {exc}") from None
    if log_prob_old is None:
        if params_old is None:
            raise ConfigError("member lacks a stored old log-prob and no params_old given")
        log_prob_old, _ = log_prob_and_grad(
            params_old, state, action, temperature, max_depth, candidates
        )
    logp_ref, _ = log_prob_and_grad(
        params_ref, state, action, temperature, max_depth, candidates
    )

    ratio = float(np.exp(logp - log_prob_old))
    clipped = float(np.clip(ratio, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip))
    unclipped_term = ratio * advantage
    clipped_term = clipped * advantage
    if unclipped_term <= clipped_term:
        surrogate = unclipped_term
        grad_surrogate = advantage * ratio * glogp
    else:
        surrogate = clipped_term
        grad_surrogate = np.zeros_like(glogp)

    delta = logp_ref - logp
    kl = float(np.exp(delta) - delta - 1.0)
    grad_kl = (1.0 - np.exp(delta)) * glogp

    value = surrogate - cfg.beta_kl * kl
    grad = grad_surrogate - cfg.beta_kl * grad_kl
    return value, grad


def grpo_objective(
    params: PolicyParams,
    params_old: Optional[PolicyParams],
    params_ref: PolicyParams,
    record: GroupRecord,
    advantages: np.ndarray,
    cfg: GrpoConfig,
) -> tuple[float, np.ndarray]:
    """Negated group objective and its exact gradient for one record.

    loss = -(1/g) sum_i (min(rho_i A_i, clip(rho_i) A_i) - beta * kl_i),
    with rho_i against each member's stored sampling log-prob and kl the
    exp(d) - d - 1 estimator against the reference policy, both evaluated
    at the record's sampling temperature. A member whose action cannot be
    replayed (or that failed at sampling time) rejects the whole record.
    """
    g = len(record.members)
    if len(advantages) != g:
        raise ConfigError("advantage vector length must equal group size")
    total = 0.0
    grad = np.zeros_like(params.weights)
    for member, adv in zip(record.members, advantages):
        if member.failed:
            raise IntegrityError(
                f"record {record.tree_path} contains a failed member; "
                "failed members cannot be trained on"
            )
        value, g_vec = _member_terms(
            params,
            params_old,
            params_ref,
            member.state,
            member.action,
            member.candidates(),
            member.log_prob_old,
            float(adv),
            record.temperature,
            record.max_depth,
            cfg,
        )
        total += value
        grad += g_vec
    loss = -total / g
    return loss, -grad / g


def split_trees(records: Sequence[GroupRecord]) -> list[list[GroupRecord]]:
    """Segment a post-order record stream into complete trees.

    Records of one search arrive in post-order with the root (empty path)
    last, so a root record closes its tree.
    """
    trees: list[list[GroupRecord]] = []
    current: list[GroupRecord] = []
    for rec in records:
        current.append(rec)
        if rec.tree_path == ():
            trees.append(current)
            current = []
    if current:
        raise IntegrityError("record stream ends inside an unfinished tree")
    return trees


def verify_propagation(records: Sequence[GroupRecord]) -> int:
    """Independent post-order recomputation of every stored reward.

    Splits the stream into trees, then checks that every hop member's
    reward equals the mean of its child group's rewards (0 for a child cut
    off by the depth guard), that answer members are leaves with binary
    reward, and raises IntegrityError on any mismatch. Returns the number
    of trees checked. Used by tests and the acceptance suite, never by
    training itself.
    """
    trees = split_trees(records)
    for tree_records in trees:
        tree: dict[tuple[int, ...], GroupRecord] = {}
        qid = tree_records[-1].question_id
        for rec in tree_records:
            if rec.question_id != qid:
                raise IntegrityError(
                    f"tree mixes questions {qid!r} and {rec.question_id!r}"
                )
            if rec.tree_path in tree:
                raise IntegrityError(
                    f"duplicate tree path {rec.tree_path} for question {qid}"
                )
            tree[rec.tree_path] = rec
        for path, rec in tree.items():
            for i, member in enumerate(rec.members):
                child = tree.get(path + (i,))
                if member.action.is_hop:
                    expected = (
                        float(np.mean([m.reward for m in child.members]))
                        if child is not None
                        else 0.0
                    )
                    if abs(member.reward - expected) > 1e-12:
                        raise IntegrityError(
                            f"question {qid} node {path} member {i}: stored "
                            f"{member.reward} != recomputed {expected}"
                        )
                else:
                    if child is not None:
                        raise IntegrityError(
                            f"question {qid} node {path} member {i}: answer "
                            "member has a child group"
                        )
                    if member.reward not in (0.0, 1.0):
                        raise IntegrityError(
                            f"question {qid} node {path} member {i}: leaf "
                            f"reward {member.reward} not binary"
                        )
    return len(trees)


def _pick_questions(
    questions: Sequence[Question], count: int, rng: np.random.Generator
) -> list[Question]:
    count = min(count, len(questions))
    idx = rng.choice(len(questions), size=count, replace=False)
    return [questions[int(i)] for i in idx]


def train_tgrpo(
    sft_params: PolicyParams,
    questions: Sequence[Question],
    kg: TemporalKG,
    scfg: SearchConfig,
    gcfg: GrpoConfig,
    rng: np.random.Generator,
    scorer: Scorer = score_fact,
    log_fn: Optional[LogFn] = None,
    record_sink: Optional[Callable[[GroupRecord], None]] = None,
) -> PolicyParams:
    """Outer loop: sync old policy, search trees, drain buffer, update.

    The reference policy is frozen at the initial parameters. Per drained
    record, group-relative advantages are computed and mu gradient-descent
    updates applied. Stops after outer_steps steps or once the sampled
    decision budget is exhausted, whichever comes first. Emits one metrics
    dict per outer step through log_fn.
    """
    if not questions:
        raise ConfigError("questions must be nonempty")
    params = sft_params
    params_ref = sft_params
    buffer = GroupBuffer()
    samples_total = 0

    for step in range(1, gcfg.outer_steps + 1):
        if gcfg.decision_budget is not None and samples_total >= gcfg.decision_budget:
            break
        params_old = params
        policy_old = DeskPolicy(params_old, scfg.max_depth)
        root_scores = []
        for q in _pick_questions(questions, gcfg.questions_per_step, rng):
            state = initial_state(kg, q, scfg.prune, scorer)
            root_scores.append(
                searching(policy_old, state, scfg, buffer, kg, rng, scorer)
            )
        records = buffer.drain()
        samples_total += scfg.g * len(records)
        if record_sink is not None:
            for rec in records:
                record_sink(rec)

        losses = []
        for rec in records:
            adv = compute_advantages(rec.rewards(), gcfg.std_floor)
            for _ in range(gcfg.mu):
                loss, grad = grpo_objective(params, params_old, params_ref, rec, adv, gcfg)
                params = PolicyParams(params.weights - gcfg.lr * grad)
                losses.append(loss)
        if log_fn is not None:
            log_fn(
                {
                    "step": step,
                    "mean_root_reward": float(np.mean(root_scores)) if root_scores else 0.0,
                    "loss": float(np.mean(losses)) if losses else 0.0,
                    "groups": len(records),
                    "samples_total": samples_total,
                }
            )
    return params


def _trajectory_objective(
    params: PolicyParams,
    params_ref: PolicyParams,
    trajectories: Sequence[Trajectory],
    advantages: np.ndarray,
    temperature: float,
    max_depth: int,
    cfg: GrpoConfig,
) -> tuple[float, np.ndarray]:
    """Flat variant: broadcast each trajectory's advantage to its steps.

    Step terms are averaged within a trajectory, then across the group.
    """
    g = len(trajectories)
    total = 0.0
    grad = np.zeros_like(params.weights)
    for tr, adv in zip(trajectories, advantages):
        if not tr.steps:
            continue
        t_total = 0.0
        t_grad = np.zeros_like(grad)
        for step in tr.steps:
            value, g_vec = _member_terms(
                params,
                None,
                params_ref,
                step.state,
                step.action,
                step.candidates(),
                step.log_prob,
                float(adv),
                temperature,
                max_depth,
                cfg,
            )
            t_total += value
            t_grad += g_vec
        total += t_total / len(tr.steps)
        grad += t_grad / len(tr.steps)
    return -total / g, -grad / g


def train_grpo_flat(
    sft_params: PolicyParams,
    questions: Sequence[Question],
    kg: TemporalKG,
    scfg: SearchConfig,
    gcfg: GrpoConfig,
    rng: np.random.Generator,
    scorer: Scorer = score_fact,
    log_fn: Optional[LogFn] = None,
) -> PolicyParams:
    """Baseline: g whole trajectories per question, terminal-only reward."""
    if not questions:
        raise ConfigError("questions must be nonempty")
    params = sft_params
    params_ref = sft_params
    samples_total = 0

    for step in range(1, gcfg.outer_steps + 1):
        if gcfg.decision_budget is not None and samples_total >= gcfg.decision_budget:
            break
        params_old = params
        policy_old = DeskPolicy(params_old, scfg.max_depth)
        groups: list[tuple[list[Trajectory], np.ndarray]] = []
        all_rewards = []
        for q in _pick_questions(questions, gcfg.questions_per_step, rng):
            trajectories = [
                sample_trajectory(
                    kg,
                    q,
                    policy_old,
                    scfg.search_temperature,
                    scfg.max_depth,
                    scfg.prune,
                    rng,
                    scorer,
                )
                for _ in range(scfg.g)
            ]
            samples_total += sum(len(tr.steps) for tr in trajectories)
            rewards = [
                terminal_reward(tr.steps[-1].action, q)
                if tr.steps and tr.steps[-1].action.is_answer
                else 0.0
                for tr in trajectories
            ]
            all_rewards.extend(rewards)
            groups.append((trajectories, compute_advantages(rewards, gcfg.std_floor)))

        losses = []
        for trajectories, adv in groups:
            for _ in range(gcfg.mu):
                loss, grad = _trajectory_objective(
                    params,
                    params_ref,
                    trajectories,
                    adv,
                    scfg.search_temperature,
                    scfg.max_depth,
                    gcfg,
                )
                params = PolicyParams(params.weights - gcfg.lr * grad)
                losses.append(loss)
        if log_fn is not None:
            log_fn(
                {
                    "step": step,
                    "mean_root_reward": float(np.mean(all_rewards)) if all_rewards else 0.0,
                    "loss": float(np.mean(losses)) if losses else 0.0,
                    "groups": len(groups),
                    "samples_total": samples_total,
                }
            )
    return params
