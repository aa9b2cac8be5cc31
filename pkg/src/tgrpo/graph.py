"""Temporal knowledge graph storage and 1-hop subgraph extraction.

A graph is a deduplicated set of temporal facts (subject, relation, object,
time interval) with entity/relation label tables and subject/object indexes.
Graphs are immutable after construction and safe to share across threads.

File formats (part of the external contract):
  facts:  one JSON object per line, {"s": int, "r": int, "o": int,
          "start": int, "end": int}
  labels: single JSON document {"entities": {id: label},
          "relations": {id: label}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import DataError, ParseError, ValidationError


class TimeInterval(NamedTuple):
    """Closed integer interval; a time point is start == end."""

    start: int
    end: int

    def contains(self, t: int) -> bool:
        return self.start <= t <= self.end

    def render(self) -> str:
        return f"[{self.start}, {self.end}]"


class Fact(NamedTuple):
    subject: int
    relation: int
    object: int
    time: TimeInterval

    def counterpart(self, central: int) -> int:
        """The endpoint that is not `central` (self for loops on central)."""
        return self.object if self.subject == central else self.subject


def _sort_key(fact: Fact, central: int):
    return (
        fact.relation,
        fact.counterpart(central),
        fact.time.start,
        fact.time.end,
        fact.subject,
        fact.object,
    )


@dataclass(frozen=True)
class TemporalKG:
    """Immutable TKG with label tables and per-entity incidence indexes."""

    facts: tuple[Fact, ...]
    entity_labels: dict[int, str]
    relation_labels: dict[int, str]
    by_subject: dict[int, tuple[int, ...]] = field(repr=False)
    by_object: dict[int, tuple[int, ...]] = field(repr=False)
    _fact_ids: dict[Fact, int] = field(repr=False)

    @classmethod
    def build(
        cls,
        facts: Iterable[Fact],
        entity_labels: dict[int, str],
        relation_labels: dict[int, str],
    ) -> "TemporalKG":
        """Deduplicate, validate and index a collection of facts.

        Raises ValidationError for a reversed interval and DataError for a
        fact that references an id missing from the label tables. The result
        is independent of input ordering: facts are stored in a canonical
        sorted order.
        """
        unique = sorted(set(facts))
        for f in unique:
            if f.time.start > f.time.end:
                raise ValidationError(
                    f"fact {f} has start > end ({f.time.start} > {f.time.end})"
                )
            for eid in (f.subject, f.object):
                if eid not in entity_labels:
                    raise DataError(f"entity id {eid} has no label entry")
            if f.relation not in relation_labels:
                raise DataError(f"relation id {f.relation} has no label entry")

        by_subject: dict[int, list[int]] = {}
        by_object: dict[int, list[int]] = {}
        for i, f in enumerate(unique):
            by_subject.setdefault(f.subject, []).append(i)
            by_object.setdefault(f.object, []).append(i)
        return cls(
            facts=tuple(unique),
            entity_labels=dict(entity_labels),
            relation_labels=dict(relation_labels),
            by_subject={k: tuple(v) for k, v in by_subject.items()},
            by_object={k: tuple(v) for k, v in by_object.items()},
            _fact_ids={f: i for i, f in enumerate(unique)},
        )

    def fact_id(self, fact: Fact) -> int:
        """Stable integer id of a fact (its position in canonical order)."""
        try:
            return self._fact_ids[fact]
        except KeyError:
            raise DataError(f"fact {fact} is not in the graph") from None

    def neighborhood(self, entity: int) -> list[Fact]:
        """All facts incident to `entity`, in deterministic order.

        Order is (relation, counterpart entity, time.start, time.end), with
        the full quadruple as the final tie-break. Unknown entities yield an
        empty list.
        """
        ids = set(self.by_subject.get(entity, ()))
        ids.update(self.by_object.get(entity, ()))
        incident = [self.facts[i] for i in ids]
        incident.sort(key=lambda f: _sort_key(f, entity))
        return incident

    def entity_label(self, entity: int) -> str:
        try:
            return self.entity_labels[entity]
        except KeyError:
            raise DataError(f"entity id {entity} has no label entry") from None

    def relation_label(self, relation: int) -> str:
        try:
            return self.relation_labels[relation]
        except KeyError:
            raise DataError(f"relation id {relation} has no label entry") from None

    def verbalize(self, fact: Fact) -> str:
        """Fixed textual template for a fact.

        "<subject> | <relation> | <object> | [<start>, <end>]". The remote
        policy protocol and the relevance scorer both consume this rendering,
        so the template must not change.
        """
        return (
            f"{self.entity_label(fact.subject)} | "
            f"{self.relation_label(fact.relation)} | "
            f"{self.entity_label(fact.object)} | "
            f"{fact.time.render()}"
        )


def load_labels(labels_path: str) -> tuple[dict[int, str], dict[int, str]]:
    """Read the {"entities": ..., "relations": ...} label tables."""
    try:
        with open(labels_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{labels_path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "entities" not in doc or "relations" not in doc:
        raise ParseError(f"{labels_path}: expected keys 'entities' and 'relations'")
    try:
        entities = {int(k): str(v) for k, v in doc["entities"].items()}
        relations = {int(k): str(v) for k, v in doc["relations"].items()}
    except (TypeError, ValueError, AttributeError):
        raise ParseError(f"{labels_path}: label tables must map int ids to strings")
    return entities, relations


_FACT_KEYS = {"s", "r", "o", "start", "end"}


def load_graph(
    facts_path: str,
    labels_path: str,
    relation_allowlist: Optional[Sequence[int]] = None,
) -> TemporalKG:
    """Load a graph from a line-delimited facts file and a labels file.

    `relation_allowlist`, when given, drops facts whose relation is not in
    the list before indexing (the task-specific relation restriction).
    Parse errors name the offending line number.
    """
    entities, relations = load_labels(labels_path)
    allow = set(relation_allowlist) if relation_allowlist is not None else None

    facts: list[Fact] = []
    with open(facts_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{facts_path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(rec, dict) or not _FACT_KEYS.issubset(rec):
                raise ParseError(
                    f"{facts_path}:{lineno}: expected keys {sorted(_FACT_KEYS)}"
                )
            try:
                fact = Fact(
                    subject=int(rec["s"]),
                    relation=int(rec["r"]),
                    object=int(rec["o"]),
                    time=TimeInterval(int(rec["start"]), int(rec["end"])),
                )
            except (TypeError, ValueError):
                raise ParseError(f"{facts_path}:{lineno}: non-integer field") from None
            if fact.time.start > fact.time.end:
                raise ValidationError(
                    f"{facts_path}:{lineno}: start > end "
                    f"({fact.time.start} > {fact.time.end})"
                )
            if allow is not None and fact.relation not in allow:
                continue
            facts.append(fact)
    return TemporalKG.build(facts, entities, relations)
