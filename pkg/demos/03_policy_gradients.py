"""The linear-softmax policy: features, distributions, exact gradients.

Run:  python demos/03_policy_gradients.py
"""

import numpy as np

from tgrpo.env import candidate_actions, initial_state
from tgrpo.policy import (
    FEATURE_DIM,
    PolicyParams,
    distribution,
    featurize,
    log_prob_and_grad,
)
from tgrpo.retrieval import PruneConfig
from tgrpo.synth import SynthSpec, generate

kg, cases = generate(
    SynthSpec(n_entities=20, n_relations=6, hop_mix={1: 1}, distractors_per_edge=2, seed=9)
)
q = cases[0].question
state = initial_state(kg, q, PruneConfig(p=8))
print("question:", q.text)

print("\nper-candidate features [overlap, temporal, is_ans, is_hop, seen, depth, relevance, bias]:")
for action in candidate_actions(state):
    print(f"  {action.render(kg):42s}", np.round(featurize(state, action), 3))

params = PolicyParams(np.array([4.0, 1.0, 0.5, 0.0, -2.0, 0.0, 5.0, 0.0]))
for t in (2.0, 1.0, 0.3):
    dist = distribution(params, state, t)
    top = np.argsort(-dist.probs)[:3]
    shown = ", ".join(f"{dist.candidates[i].render(kg)}={dist.probs[i]:.2f}" for i in top)
    print(f"\ntemperature {t}: entropy {dist.entropy():.3f}; top: {shown}")

action = candidate_actions(state)[0]
logp, grad = log_prob_and_grad(params, state, action, temperature=1.0)
print(f"\nlog pi({action.render(kg)!r}) = {logp:.4f}")

h = 1e-5
fd = np.zeros(FEATURE_DIM)
for i in range(FEATURE_DIM):
    e = np.zeros(FEATURE_DIM)
    e[i] = h
    hi, _ = log_prob_and_grad(PolicyParams(params.weights + e), state, action, 1.0)
    lo, _ = log_prob_and_grad(PolicyParams(params.weights - e), state, action, 1.0)
    fd[i] = (hi - lo) / (2 * h)
rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
print(f"analytic vs central finite differences: relative error {rel:.2e}")
