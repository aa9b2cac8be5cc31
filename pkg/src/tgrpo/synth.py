"""Deterministic synthetic benchmark generator with planted gold paths.

Each question plants a relation/time-constrained chain through the graph
and surrounds every chain edge with temporally confusable distractors:
same relation at a different time, and same time under a different
relation. Generation maintains one global invariant that makes planted
solutions provably unique: no entity ever carries two incident facts with
the same (relation, time) pair, so a question's constraint sequence is
satisfiable by exactly one path.

Entity labels carry a family word ("entity_gamma_17") and questions name
the answer's family, which gives lexical scorers a usable signal without
leaking the answer itself. Entities are split into an answer pool and an
interior pool: answer entities never appear mid-chain or as distractor
targets, so a gold answer only ever becomes visible from its planted
doorstep and accidental answer-matching walks stay rare.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import AnswerValue, Question
from .errors import GenerationError
from .graph import Fact, TemporalKG, TimeInterval

ENTITY_FAMILIES = ("alpha", "beta", "gamma", "delta", "epsilon")
RELATION_WORDS = (
    "award", "member", "visit", "sign", "found", "defeat", "host", "join",
)

_MAX_TRIES = 200


@dataclass(frozen=True)
class SynthSpec:
    n_entities: int = 100
    n_relations: int = 16
    time_range: TimeInterval = TimeInterval(1900, 2099)
    hop_mix: dict[int, int] = field(default_factory=lambda: {1: 10, 2: 10, 3: 10})
    distractors_per_edge: int = 3
    seed: int = 0
    time_answer_fraction: float = 0.0

    def __post_init__(self):
        if self.n_entities < 1 or self.n_relations < 1:
            raise GenerationError("need at least one entity and one relation")
        for hops, count in self.hop_mix.items():
            if hops not in (1, 2, 3):
                raise GenerationError(f"hop counts must be in 1..3, got {hops}")
            if count < 0:
                raise GenerationError("question counts must be >= 0")
        if self.distractors_per_edge < 0:
            raise GenerationError("distractors_per_edge must be >= 0")
        if not 0.0 <= self.time_answer_fraction <= 1.0:
            raise GenerationError("time_answer_fraction must be in [0, 1]")


@dataclass(frozen=True)
class GeneratedCase:
    question: Question
    gold_path: tuple[Fact, ...]
    gold_answer: AnswerValue


def _entity_family(entity: int) -> str:
    return ENTITY_FAMILIES[entity % len(ENTITY_FAMILIES)]


def _entity_label(entity: int) -> str:
    return f"entity_{_entity_family(entity)}_{entity}"


def _relation_label(relation: int) -> str:
    word = RELATION_WORDS[relation % len(RELATION_WORDS)]
    return f"relation_{word}_{relation}"


class _Builder:
    """Accumulates facts under the (relation, time)-uniqueness invariant."""

    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.facts: list[Fact] = []
        self.fact_keys: set[Fact] = set()
        self.incident_pairs: dict[int, set[tuple[int, int, int]]] = {}

    def pair_free(self, entity: int, relation: int, time: TimeInterval) -> bool:
        return (relation, time.start, time.end) not in self.incident_pairs.get(
            entity, set()
        )

    def add_fact(self, subject: int, relation: int, obj: int, time: TimeInterval):
        fact = Fact(subject, relation, obj, time)
        if fact in self.fact_keys:
            raise GenerationError(f"duplicate fact generated: {fact}")
        key = (relation, time.start, time.end)
        for endpoint in (subject, obj):
            if not self.pair_free(endpoint, relation, time):
                raise GenerationError(
                    f"entity {endpoint} already carries pair {key}"
                )
        self.facts.append(fact)
        self.fact_keys.add(fact)
        for endpoint in {subject, obj}:
            self.incident_pairs.setdefault(endpoint, set()).add(key)
        return fact

    def sample_time(self) -> int:
        lo, hi = self.spec.time_range
        return int(self.rng.integers(lo, hi + 1))

    def sample_free_pair(self, u: int, v: int, relations: list[int]):
        """A (relation, point time) pair free on both endpoints."""
        for _ in range(_MAX_TRIES):
            r = int(self.rng.choice(relations))
            t = TimeInterval(*(self.sample_time(),) * 2)
            if self.pair_free(u, r, t) and self.pair_free(v, r, t):
                return r, t
        raise GenerationError(
            f"could not find a free (relation, time) pair between {u} and {v}; "
            "increase n_relations or the time range"
        )


def _pick_entities(
    rng: np.random.Generator,
    pool: np.ndarray,
    count: int,
    exclude: set[int],
    what: str,
) -> list[int]:
    allowed = [int(e) for e in pool if int(e) not in exclude]
    if len(allowed) < count:
        raise GenerationError(
            f"not enough entities to choose {count} {what}; "
            f"increase n_entities (have {len(allowed)} candidates)"
        )
    picked = rng.choice(len(allowed), size=count, replace=False)
    return [allowed[int(i)] for i in picked]


def _question_text(
    hops: int,
    head: int,
    relations: list[int],
    times: list[int],
    answer_entity: Optional[int],
) -> str:
    clauses = []
    for i, (r, t) in enumerate(zip(relations, times)):
        rel = _relation_label(r)
        if answer_entity is None and i == hops - 1:
            clauses.append(f"finally {rel}")
        else:
            clauses.append(f"{rel} in {t}")
    chain = ", then ".join(clauses)
    head_label = _entity_label(head)
    if answer_entity is not None:
        family = _entity_family(answer_entity)
        return f"Which {family} entity does {head_label} reach via {chain}?"
    return f"In which year does {head_label} conclude via {chain}?"


def generate(spec: SynthSpec) -> tuple[TemporalKG, list[GeneratedCase]]:
    """Build the graph and question set; fully determined by spec.seed."""
    rng = np.random.default_rng(spec.seed)
    builder = _Builder(spec, rng)
    all_entities = np.arange(spec.n_entities)
    all_relations = list(range(spec.n_relations))

    # answer pool: the upper half of the id range (at least one entity)
    split = max(spec.n_entities // 2, 1)
    answer_pool = np.arange(split, spec.n_entities) if split < spec.n_entities else all_entities
    interior_pool = np.arange(0, split)
    if len(interior_pool) == 0:
        interior_pool = all_entities

    total_questions = sum(spec.hop_mix.values())
    n_time_answers = int(round(spec.time_answer_fraction * total_questions))

    plan: list[int] = []
    for hops in sorted(spec.hop_mix):
        plan.extend([hops] * spec.hop_mix[hops])

    cases: list[GeneratedCase] = []
    for qi, hops in enumerate(plan):
        time_answer = qi < n_time_answers
        if spec.n_entities < hops + 1:
            raise GenerationError(
                f"{hops}-hop chain needs {hops + 1} entities, have {spec.n_entities}"
            )

        answer_entity = int(answer_pool[int(rng.integers(0, len(answer_pool)))])
        answer_family = _entity_family(answer_entity)
        off_family = {
            int(e)
            for e in interior_pool
            if _entity_family(int(e)) == answer_family
        }
        interior = _pick_entities(
            rng, interior_pool, hops, {answer_entity} | off_family, "chain entities"
        )
        chain = interior + [answer_entity]

        relations: list[int] = []
        times: list[TimeInterval] = []
        gold_path: list[Fact] = []
        for i in range(hops):
            u, v = chain[i], chain[i + 1]
            pool = [r for r in all_relations if r not in relations]
            if not pool:
                raise GenerationError(
                    f"{hops}-hop chain needs {hops} distinct relations, "
                    f"have {spec.n_relations}"
                )
            r, t = builder.sample_free_pair(u, v, pool)
            relations.append(r)
            times.append(t)
            if rng.random() < 0.5:
                gold_path.append(builder.add_fact(u, r, v, t))
            else:
                gold_path.append(builder.add_fact(v, r, u, t))

        _plant_distractors(
            builder, spec, rng, interior_pool, chain, relations, times,
            answer_family, time_answer,
        )

        if time_answer:
            gold_answer = AnswerValue.time(times[-1])
            qtype = "time"
        else:
            gold_answer = AnswerValue.entity(answer_entity)
            qtype = "entity"
        text = _question_text(
            hops,
            chain[0],
            relations,
            [t.start for t in times],
            None if time_answer else answer_entity,
        )
        cases.append(
            GeneratedCase(
                question=Question(
                    id=f"q{qi:04d}",
                    text=text,
                    head_entity=chain[0],
                    gold_answers=frozenset([gold_answer]),
                    hop_count=hops,
                    qtype=qtype,
                ),
                gold_path=tuple(gold_path),
                gold_answer=gold_answer,
            )
        )

    entity_labels = {int(e): _entity_label(int(e)) for e in all_entities}
    relation_labels = {r: _relation_label(r) for r in all_relations}
    kg = TemporalKG.build(builder.facts, entity_labels, relation_labels)
    return kg, cases


def _plant_distractors(
    builder: _Builder,
    spec: SynthSpec,
    rng: np.random.Generator,
    interior_pool: np.ndarray,
    chain: list[int],
    relations: list[int],
    times: list[TimeInterval],
    answer_family: str,
    time_answer: bool,
) -> None:
    hops = len(relations)
    for i in range(hops):
        u = chain[i]
        last_edge = i == hops - 1
        for d in range(spec.distractors_per_edge):
            # Alternate confuser kinds; a time-answer question's final edge
            # must not get same-relation confusers or "when" turns ambiguous.
            same_relation = d % 2 == 0 and not (time_answer and last_edge)
            placed = False
            for _ in range(_MAX_TRIES):
                exclude = set(chain) | {
                    int(e)
                    for e in interior_pool
                    if _entity_family(int(e)) == answer_family
                }
                pool = [int(e) for e in interior_pool if int(e) not in exclude]
                if not pool:
                    raise GenerationError(
                        "no entities left for distractor targets; increase n_entities"
                    )
                target = pool[int(rng.integers(0, len(pool)))]
                if same_relation:
                    r = relations[i]
                    t = TimeInterval(*(builder.sample_time(),) * 2)
                    if t == times[i]:
                        continue
                else:
                    off_chain = [r for r in range(spec.n_relations) if r not in relations]
                    if not off_chain:
                        raise GenerationError(
                            "no off-chain relations for distractors; increase n_relations"
                        )
                    r = int(rng.choice(off_chain))
                    t = times[i]
                if builder.pair_free(u, r, t) and builder.pair_free(target, r, t):
                    if rng.random() < 0.5:
                        builder.add_fact(u, r, target, t)
                    else:
                        builder.add_fact(target, r, u, t)
                    placed = True
                    break
            if not placed:
                raise GenerationError(
                    f"could not place a distractor on edge {i}; "
                    "increase n_entities, n_relations or the time range"
                )


def enumerate_template_paths(
    kg: TemporalKG,
    head: int,
    constraints: list[tuple[int, Optional[TimeInterval]]],
) -> list[list[Fact]]:
    """All paths from `head` matching the (relation, time) constraint list.

    A None time constrains the relation only. Used as the soundness oracle:
    a sound benchmark yields exactly one path per question.
    """
    paths: list[list[Fact]] = []

    def walk(entity: int, step: int, acc: list[Fact]):
        if step == len(constraints):
            paths.append(list(acc))
            return
        relation, time = constraints[step]
        for fact in kg.neighborhood(entity):
            if fact.relation != relation:
                continue
            if time is not None and fact.time != time:
                continue
            acc.append(fact)
            walk(fact.counterpart(entity), step + 1, acc)
            acc.pop()

    walk(head, 0, [])
    return paths


def case_constraints(case: GeneratedCase) -> list[tuple[int, Optional[TimeInterval]]]:
    """The (relation, time) template implied by a generated question."""
    constraints: list[tuple[int, Optional[TimeInterval]]] = []
    path = case.gold_path
    for i, fact in enumerate(path):
        final = i == len(path) - 1
        if final and case.gold_answer.kind == "time":
            constraints.append((fact.relation, None))
        else:
            constraints.append((fact.relation, fact.time))
    return constraints


def write_dataset(
    kg: TemporalKG,
    cases: list[GeneratedCase],
    out_dir: str,
) -> dict[str, str]:
    """Emit facts/labels/questions files plus the gold-path sidecar."""
    import os

    from .env import dump_questions

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "facts": os.path.join(out_dir, "facts.jsonl"),
        "labels": os.path.join(out_dir, "labels.json"),
        "questions": os.path.join(out_dir, "questions.jsonl"),
        "gold_paths": os.path.join(out_dir, "gold_paths.jsonl"),
    }
    with open(paths["facts"], "w", encoding="utf-8") as fh:
        for f in kg.facts:
            fh.write(
                json.dumps(
                    {
                        "s": f.subject,
                        "r": f.relation,
                        "o": f.object,
                        "start": f.time.start,
                        "end": f.time.end,
                    }
                )
                + "\n"
            )
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        json.dump(
            {
                "entities": {str(k): v for k, v in sorted(kg.entity_labels.items())},
                "relations": {str(k): v for k, v in sorted(kg.relation_labels.items())},
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    dump_questions([c.question for c in cases], paths["questions"])
    with open(paths["gold_paths"], "w", encoding="utf-8") as fh:
        for c in cases:
            answer = (
                {"kind": "entity", "entity": c.gold_answer.entity_id}
                if c.gold_answer.kind == "entity"
                else {"kind": "time", "start": c.gold_answer.a, "end": c.gold_answer.b}
            )
            fh.write(
                json.dumps(
                    {
                        "id": c.question.id,
                        "path": [
                            {
                                "s": f.subject,
                                "r": f.relation,
                                "o": f.object,
                                "start": f.time.start,
                                "end": f.time.end,
                            }
                            for f in c.gold_path
                        ],
                        "answer": answer,
                    }
                )
                + "\n"
            )
    return paths
