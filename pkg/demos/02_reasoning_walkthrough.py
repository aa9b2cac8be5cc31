"""Walk the reasoning environment by hand on a planted 2-hop question.

Run:  python demos/02_reasoning_walkthrough.py
"""

from tgrpo.env import candidate_actions, apply_hop, initial_state, terminal_reward
from tgrpo.retrieval import PruneConfig
from tgrpo.synth import SynthSpec, generate

kg, cases = generate(
    SynthSpec(n_entities=20, n_relations=6, hop_mix={2: 1}, distractors_per_edge=2, seed=4)
)
case = cases[0]
q = case.question
print("question:", q.text)
print("gold answer:", case.gold_answer.render(kg))
print("planted chain:")
for fact in case.gold_path:
    print("  ", kg.verbalize(fact))

cfg = PruneConfig(p=8)
state = initial_state(kg, q, cfg)
print(f"\ndepth 0, central = {kg.entity_label(state.central)}; candidates:")
for action in candidate_actions(state):
    print("  ", action.render(kg))

gold_hop_target = case.gold_path[0].counterpart(state.central)
hop = next(a for a in candidate_actions(state) if a.is_hop and a.target == gold_hop_target)
state = apply_hop(kg, state, hop, cfg)
print(f"\nafter {hop.render(kg)}: depth {state.depth}, "
      f"history holds {len(state.history)} facts; candidates:")
for action in candidate_actions(state):
    marker = ""
    if action.is_answer and action.value == case.gold_answer:
        marker = f"   <- reward {terminal_reward(action, q)}"
    print("  ", action.render(kg), marker)
