import json

import numpy as np
import pytest

from tgrpo.env import Question, candidate_actions
from tgrpo.graph import Fact, TemporalKG, TimeInterval
from tgrpo.env import AnswerValue


def ti(start, end=None):
    return TimeInterval(start, start if end is None else end)


# Six-fact fixture used by the graph tests; entity 3 appears in three facts.
FIXTURE_FACTS = [
    Fact(1, 0, 2, ti(2001)),
    Fact(3, 0, 2, ti(2002)),
    Fact(2, 1, 3, ti(2003, 2005)),
    Fact(4, 1, 5, ti(2004)),
    Fact(3, 2, 4, ti(2005)),
    Fact(5, 2, 1, ti(2006)),
]

FIXTURE_ENTITIES = {
    1: "messi",
    2: "ballon d'or",
    3: "world cup",
    4: "argentina",
    5: "inter miami",
}

FIXTURE_RELATIONS = {0: "received", 1: "awarded at", 2: "won by"}


@pytest.fixture
def fixture_kg():
    return TemporalKG.build(FIXTURE_FACTS, FIXTURE_ENTITIES, FIXTURE_RELATIONS)


@pytest.fixture
def fixture_files(tmp_path):
    facts_path = tmp_path / "facts.jsonl"
    labels_path = tmp_path / "labels.json"
    with open(facts_path, "w") as fh:
        for f in FIXTURE_FACTS:
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
    with open(labels_path, "w") as fh:
        json.dump(
            {
                "entities": {str(k): v for k, v in FIXTURE_ENTITIES.items()},
                "relations": {str(k): v for k, v in FIXTURE_RELATIONS.items()},
            },
            fh,
        )
    return str(facts_path), str(labels_path)


def build_chain_kg():
    """2-hop chain 10 -r0/2000-> 11 -r1/2010-> 12 plus confusers."""
    facts = [
        Fact(10, 0, 11, ti(2000)),   # gold edge 1
        Fact(11, 1, 12, ti(2010)),   # gold edge 2
        Fact(10, 0, 13, ti(1990)),   # same relation, wrong time
        Fact(10, 2, 14, ti(2000)),   # same time, wrong relation
        Fact(11, 1, 15, ti(1995)),   # same relation, wrong time (edge 2)
        Fact(16, 2, 11, ti(2010)),   # same time, wrong relation (edge 2)
    ]
    entities = {
        10: "entity_alpha_10",
        11: "entity_beta_11",
        12: "entity_gamma_12",
        13: "entity_beta_13",
        14: "entity_delta_14",
        15: "entity_delta_15",
        16: "entity_beta_16",
    }
    relations = {0: "relation_award_0", 1: "relation_member_1", 2: "relation_visit_2"}
    return TemporalKG.build(facts, entities, relations)


@pytest.fixture
def chain_kg():
    return build_chain_kg()


@pytest.fixture
def chain_question():
    return Question(
        id="chain-q",
        text=(
            "Which gamma entity does entity_alpha_10 reach via relation_award_0 "
            "in 2000, then relation_member_1 in 2010?"
        ),
        head_entity=10,
        gold_answers=frozenset([AnswerValue.entity(12)]),
        hop_count=2,
        qtype="entity",
    )


class ScriptedPolicy:
    """Test policy that replays a fixed decision script.

    Each script entry is a predicate over candidate actions; the first
    matching candidate is chosen with log-prob 0.
    """

    def __init__(self, script):
        self.script = list(script)
        self.calls = 0

    def act(self, state, temperature, rng, candidates=None):
        if candidates is None:
            candidates = candidate_actions(state)
        predicate = self.script[self.calls % len(self.script)]
        self.calls += 1
        for action in candidates:
            if predicate(action):
                return action, 0.0
        raise AssertionError("script matched no candidate")


def pick_hop(target):
    return lambda a: a.is_hop and a.target == target


def pick_answer(value):
    return lambda a: a.is_answer and a.value == value


def seeded_rng(seed=0):
    return np.random.default_rng(seed)
