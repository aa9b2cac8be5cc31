"""Small end-to-end run: cold start, SFT, tree-group RL vs the flat baseline.

Uses a reduced benchmark so the whole script finishes in about a minute.
Run:  python demos/05_end_to_end.py
"""

import numpy as np

from tgrpo.evaluation import evaluate
from tgrpo.policy import DeskPolicy, PolicyParams
from tgrpo.retrieval import PruneConfig
from tgrpo.sampling import (
    build_sft_dataset,
    derive_seed,
    filter_positive,
    sample_multi,
    train_sft,
)
from tgrpo.synth import SynthSpec, generate
from tgrpo.training import GrpoConfig, SearchConfig, train_grpo_flat, train_tgrpo

SEED = 0
kg, cases = generate(SynthSpec(
    n_entities=60, n_relations=12, hop_mix={2: 30, 3: 30},
    distractors_per_edge=3, seed=SEED,
))
questions = [c.question for c in cases]
prune = PruneConfig(p=16)
print(f"benchmark: {len(kg.facts)} facts, {len(questions)} questions")

# 1. multi-trajectory sampling from the bootstrap prior, keep positives
sampler_policy = DeskPolicy(PolicyParams.bootstrap_prior(), 3)
per_question = []
for q in questions:
    tset = sample_multi(kg, q, sampler_policy, [0.2, 0.7, 1.0], 2, 3, prune,
                        derive_seed(SEED, "cold", q.id))
    positives = filter_positive(tset)
    if positives:
        per_question.append((q, positives))
data = build_sft_dataset(per_question)
print(f"cold start: {len(per_question)} questions produced {len(data)} step instances")

# 2. supervised fit of the step decisions
sft, losses = train_sft(PolicyParams.zeros(), data, epochs=30, lr=0.5,
                        rng=np.random.default_rng(derive_seed(SEED, "sft")))
print(f"sft: loss {losses[0]:.3f} -> {losses[-1]:.3f}")

# 3. RL with an equal sampling budget for both algorithms
scfg = SearchConfig(g=4, max_depth=3, prune=prune, search_temperature=1.0)
gcfg = GrpoConfig(outer_steps=10**6, lr=0.1, beta_kl=0.04, mu=2,
                  questions_per_step=8, decision_budget=15000)
tree = train_tgrpo(sft, questions, kg, scfg, gcfg,
                   np.random.default_rng(derive_seed(SEED, "tree")))
flat = train_grpo_flat(sft, questions, kg, scfg, gcfg,
                       np.random.default_rng(derive_seed(SEED, "flat")))

# 4. ranked-answer evaluation
for name, params in [("zero", PolicyParams.zeros()), ("sft", sft),
                     ("flat", flat), ("tree", tree)]:
    report = evaluate(DeskPolicy(params, 3), kg, questions, prune,
                      n_rollouts=16, temperature=0.33, max_depth=3,
                      rng_seed=derive_seed(SEED, "eval", name))
    per_hop = {h: round(m[1], 3) for h, m in report.per_hop.items()}
    print(f"{name:5s} hits@1={report.hits[1]:.3f} hits@10={report.hits[10]:.3f} per-hop {per_hop}")
