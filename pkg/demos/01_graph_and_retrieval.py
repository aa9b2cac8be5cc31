"""Build a tiny temporal KG, inspect neighborhoods, score and prune facts.

Run:  python demos/01_graph_and_retrieval.py
"""

from tgrpo.graph import Fact, TemporalKG, TimeInterval
from tgrpo.retrieval import PruneConfig, prune_top_p, score_fact


def point(year):
    return TimeInterval(year, year)


facts = [
    Fact(1, 0, 2, point(2023)),            # messi received ballon d'or 2023
    Fact(1, 0, 3, point(2022)),            # messi received golden ball 2022
    Fact(1, 1, 4, TimeInterval(2021, 2025)),
    Fact(5, 0, 2, point(2021)),
]
kg = TemporalKG.build(
    facts,
    entity_labels={
        1: "messi", 2: "ballon d'or", 3: "world cup golden ball",
        4: "inter miami", 5: "benzema",
    },
    relation_labels={0: "received", 1: "plays for"},
)

print("facts incident to messi (deterministic order):")
for fact in kg.neighborhood(1):
    print("  ", kg.verbalize(fact))

question = "which award did messi receive in 2022?"
print(f"\nrelevance of each fact to: {question!r}")
for fact in kg.neighborhood(1):
    text = kg.verbalize(fact)
    print(f"  {score_fact(question, text):.3f}  {text}")

print("\ntop-2 pruned working subgraph:")
for fact in prune_top_p(question, kg.neighborhood(1), PruneConfig(p=2), kg):
    print("  ", kg.verbalize(fact))
