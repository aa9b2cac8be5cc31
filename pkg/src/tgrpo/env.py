"""Multi-hop reasoning environment: states, candidate actions, transitions.

A state is (question, central entity, pruned subgraph, history, depth).
Actions either hop to an entity visible in the current subgraph or answer
with an entity/timestamp visible there (plus a distinguished Unknown answer
offered only on empty subgraphs). Reward is sparse: only Answer actions can
score, by exact match against the gold answer set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InvalidActionError, ParseError, ValidationError
from .graph import Fact, TemporalKG, TimeInterval
from .retrieval import PruneConfig, Scorer, prune_top_p, score_fact

KIND_ENTITY = "entity"
KIND_TIME = "time"
KIND_UNKNOWN = "unknown"


@dataclass(frozen=True, order=True)
class AnswerValue:
    """An entity id or a time interval, canonically comparable."""

    kind: str
    a: int = 0
    b: int = 0

    @classmethod
    def entity(cls, entity_id: int) -> "AnswerValue":
        return cls(KIND_ENTITY, entity_id, entity_id)

    @classmethod
    def time(cls, interval: TimeInterval) -> "AnswerValue":
        return cls(KIND_TIME, interval.start, interval.end)

    @property
    def entity_id(self) -> int:
        assert self.kind == KIND_ENTITY
        return self.a

    @property
    def interval(self) -> TimeInterval:
        assert self.kind == KIND_TIME
        return TimeInterval(self.a, self.b)

    def is_unknown(self) -> bool:
        return self.kind == KIND_UNKNOWN

    def render(self, kg: Optional[TemporalKG] = None) -> str:
        if self.kind == KIND_ENTITY:
            return kg.entity_label(self.a) if kg is not None else f"entity:{self.a}"
        if self.kind == KIND_TIME:
            return TimeInterval(self.a, self.b).render()
        return "UNKNOWN"


UNKNOWN = AnswerValue(KIND_UNKNOWN)

HOP = "hop"
ANSWER = "answer"


@dataclass(frozen=True)
class Action:
    """Hop(target) or Answer(value).

    Identity (equality, dedup, candidate membership) is the (kind, target,
    value) triple; the rationale text and the source fact that produced the
    action are bookkeeping only.
    """

    kind: str
    target: Optional[int] = None
    value: Optional[AnswerValue] = None
    rationale: str = field(default="", compare=False)
    source_fact: Optional[Fact] = field(default=None, compare=False)

    @classmethod
    def hop(cls, target: int, rationale: str = "", source_fact: Fact | None = None):
        return cls(HOP, target=target, rationale=rationale, source_fact=source_fact)

    @classmethod
    def answer(
        cls, value: AnswerValue, rationale: str = "", source_fact: Fact | None = None
    ):
        return cls(ANSWER, value=value, rationale=rationale, source_fact=source_fact)

    @property
    def is_answer(self) -> bool:
        return self.kind == ANSWER

    @property
    def is_hop(self) -> bool:
        return self.kind == HOP

    def render(self, kg: Optional[TemporalKG] = None) -> str:
        """Deterministic candidate string for the remote wire protocol."""
        if self.is_hop:
            label = kg.entity_label(self.target) if kg is not None else str(self.target)
            return f"HOP {label}"
        v = self.value
        if v.kind == KIND_ENTITY:
            return f"ANSWER ENTITY {v.render(kg)}"
        if v.kind == KIND_TIME:
            return f"ANSWER TIME {v.render()}"
        return "ANSWER UNKNOWN"


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    head_entity: int
    gold_answers: frozenset[AnswerValue]
    hop_count: Optional[int] = None
    qtype: Optional[str] = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValidationError(f"question {self.id!r} has no gold answers")


@dataclass(frozen=True)
class ReasoningState:
    """Immutable environment state; kg is carried for rendering/featurizing."""

    question: Question
    central: int
    subgraph: tuple[Fact, ...]
    history: tuple[Fact, ...]
    depth: int
    kg: TemporalKG = field(repr=False, compare=False)

    @property
    def cache(self) -> dict:
        """Per-instance memo for derived values (candidates, features)."""
        try:
            return object.__getattribute__(self, "_cache")
        except AttributeError:
            object.__setattr__(self, "_cache", {})
            return object.__getattribute__(self, "_cache")

    def digest(self) -> tuple:
        """(question id, central, subgraph fact ids, history fact ids, depth)."""
        return (
            self.question.id,
            self.central,
            tuple(self.kg.fact_id(f) for f in self.subgraph),
            tuple(self.kg.fact_id(f) for f in self.history),
            self.depth,
        )

    def history_entities(self) -> set[int]:
        cached = self.cache.get("history_entities")
        if cached is None:
            cached = set()
            for f in self.history:
                cached.add(f.subject)
                cached.add(f.object)
            self.cache["history_entities"] = cached
        return cached

    def history_times(self) -> set[TimeInterval]:
        cached = self.cache.get("history_times")
        if cached is None:
            cached = {f.time for f in self.history}
            self.cache["history_times"] = cached
        return cached


def initial_state(
    kg: TemporalKG,
    q: Question,
    cfg: PruneConfig,
    scorer: Scorer = score_fact,
) -> ReasoningState:
    """Depth-0 state: pruned 1-hop neighborhood of the head entity."""
    neighborhood = kg.neighborhood(q.head_entity)
    subgraph = prune_top_p(q.text, neighborhood, cfg, kg, scorer)
    return ReasoningState(
        question=q,
        central=q.head_entity,
        subgraph=tuple(subgraph),
        history=(),
        depth=0,
        kg=kg,
    )


def candidate_actions(state: ReasoningState) -> list[Action]:
    """Enumerate legal actions in deterministic order.

    Per subgraph fact: a hop to its counterpart entity, an entity answer for
    the counterpart, and a time answer for the fact's interval. Hops come
    first (subgraph order), then answers (subgraph order, entity before time
    per fact); duplicates are dropped keeping the first occurrence. An empty
    subgraph yields exactly [Answer(Unknown)].
    """
    cached = state.cache.get("candidates")
    if cached is not None:
        return cached
    kg = state.kg
    if not state.subgraph:
        out = [Action.answer(UNKNOWN, rationale="answer unknown")]
        state.cache["candidates"] = out
        return out

    hops: list[Action] = []
    answers: list[Action] = []
    seen: set[tuple] = set()
    for fact in state.subgraph:
        counterpart = fact.counterpart(state.central)
        hop = Action.hop(
            counterpart,
            rationale=f"hop to {kg.entity_label(counterpart)}",
            source_fact=fact,
        )
        if (HOP, counterpart) not in seen:
            seen.add((HOP, counterpart))
            hops.append(hop)
    for fact in state.subgraph:
        counterpart = fact.counterpart(state.central)
        ent = AnswerValue.entity(counterpart)
        if (ANSWER, ent) not in seen:
            seen.add((ANSWER, ent))
            answers.append(
                Action.answer(
                    ent,
                    rationale=f"answer {kg.entity_label(counterpart)}",
                    source_fact=fact,
                )
            )
        tim = AnswerValue.time(fact.time)
        if (ANSWER, tim) not in seen:
            seen.add((ANSWER, tim))
            answers.append(
                Action.answer(
                    tim, rationale=f"answer {fact.time.render()}", source_fact=fact
                )
            )
    out = hops + answers
    state.cache["candidates"] = out
    return out


def masked_candidates(state: ReasoningState) -> list[Action]:
    """Answer-only candidate list with a stable identity per state."""
    cached = state.cache.get("masked_candidates")
    if cached is None:
        cached = answer_only(candidate_actions(state))
        state.cache["masked_candidates"] = cached
    return cached


def answer_only(candidates: list[Action]) -> list[Action]:
    """Mask hops (used at the depth limit); falls back to Answer(Unknown)."""
    answers = [a for a in candidates if a.is_answer]
    if not answers:
        return [Action.answer(UNKNOWN, rationale="answer unknown")]
    return answers


def apply_hop(
    kg: TemporalKG,
    state: ReasoningState,
    action: Action,
    cfg: PruneConfig,
    scorer: Scorer = score_fact,
) -> ReasoningState:
    """Transition along a hop: new pruned subgraph, history grows by the old.

    History keeps set-union semantics with insertion order. Raises
    InvalidActionError when the hop is not a candidate of `state`.
    """
    if not action.is_hop or action not in candidate_actions(state):
        raise InvalidActionError(
            f"action {action!r} is not a hop candidate of this state"
        )
    merged = list(state.history)
    present = set(state.history)
    for f in state.subgraph:
        if f not in present:
            present.add(f)
            merged.append(f)
    neighborhood = kg.neighborhood(action.target)
    subgraph = prune_top_p(state.question.text, neighborhood, cfg, kg, scorer)
    return ReasoningState(
        question=state.question,
        central=action.target,
        subgraph=tuple(subgraph),
        history=tuple(merged),
        depth=state.depth + 1,
        kg=kg,
    )


def terminal_reward(action: Action, q: Question) -> float:
    """1.0 for an exact gold match, else 0.0; Unknown never matches."""
    if not action.is_answer:
        raise InvalidActionError("terminal_reward is defined only for answers")
    if action.value is None or action.value.is_unknown():
        return 0.0
    return 1.0 if action.value in q.gold_answers else 0.0


def _parse_answer(rec: dict, where: str) -> AnswerValue:
    kind = rec.get("kind")
    if kind == KIND_ENTITY:
        if "entity" not in rec:
            raise ParseError(f"{where}: entity answer missing 'entity'")
        return AnswerValue.entity(int(rec["entity"]))
    if kind == KIND_TIME:
        if "start" not in rec or "end" not in rec:
            raise ParseError(f"{where}: time answer missing 'start'/'end'")
        return AnswerValue.time(TimeInterval(int(rec["start"]), int(rec["end"])))
    raise ParseError(f"{where}: answer kind must be 'entity' or 'time', got {kind!r}")


def load_questions(path: str) -> list[Question]:
    """Read line-delimited question records.

    Schema per line: {"id": str, "text": str, "head": int, "answers":
    [{"kind": "entity"|"time", "entity": int?, "start": int?, "end": int?}],
    "hops": int?, "qtype": str?}.
    """
    questions: list[Question] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: invalid JSON: {exc}") from None
            for key in ("id", "text", "head", "answers"):
                if key not in rec:
                    raise ParseError(f"{where}: missing key {key!r}")
            answers = frozenset(
                _parse_answer(a, where) for a in rec["answers"]
            )
            questions.append(
                Question(
                    id=str(rec["id"]),
                    text=str(rec["text"]),
                    head_entity=int(rec["head"]),
                    gold_answers=answers,
                    hop_count=int(rec["hops"]) if rec.get("hops") is not None else None,
                    qtype=rec.get("qtype"),
                )
            )
    return questions


def dump_questions(questions: Iterable[Question], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            answers = []
            for a in sorted(q.gold_answers):
                if a.kind == KIND_ENTITY:
                    answers.append({"kind": KIND_ENTITY, "entity": a.entity_id})
                else:
                    answers.append(
                        {"kind": KIND_TIME, "start": a.a, "end": a.b}
                    )
            rec = {
                "id": q.id,
                "text": q.text,
                "head": q.head_entity,
                "answers": answers,
            }
            if q.hop_count is not None:
                rec["hops"] = q.hop_count
            if q.qtype is not None:
                rec["qtype"] = q.qtype
            fh.write(json.dumps(rec) + "\n")
