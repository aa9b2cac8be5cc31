"""Tree-group search with backward reward propagation, printed as a tree.

Run:  python demos/04_tree_search.py
"""

import numpy as np

from tgrpo.env import initial_state
from tgrpo.policy import DeskPolicy, PolicyParams
from tgrpo.retrieval import PruneConfig
from tgrpo.synth import SynthSpec, generate
from tgrpo.training import GroupBuffer, SearchConfig, searching, verify_propagation

kg, cases = generate(
    SynthSpec(n_entities=20, n_relations=6, hop_mix={2: 1}, distractors_per_edge=1, seed=2)
)
case = cases[0]
print("question:", case.question.text)
print("gold:", case.gold_answer.render(kg))

cfg = SearchConfig(g=3, max_depth=3, prune=PruneConfig(p=8), search_temperature=1.0)
buffer = GroupBuffer()
policy = DeskPolicy(PolicyParams.bootstrap_prior(), cfg.max_depth)
state = initial_state(kg, case.question, cfg.prune)
root_score = searching(policy, state, cfg, buffer, kg, np.random.default_rng(11))

records = {rec.tree_path: rec for rec in buffer.peek()}
print(f"\nroot score {root_score:.4f}; {len(records)} groups recorded\n")


def show(path, indent):
    rec = records.get(path)
    if rec is None:
        return
    for i, member in enumerate(rec.members):
        print(f"{'  ' * indent}[{'/'.join(map(str, path + (i,))) or 'root'}] "
              f"{member.action.render(kg):40s} reward={member.reward:.4f}")
        show(path + (i,), indent + 1)


show((), 0)

n_trees = verify_propagation(buffer.peek())
print(f"\nindependent post-order recomputation verified {n_trees} tree(s): "
      "every hop reward equals the mean of its child group")
