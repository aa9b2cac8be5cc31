"""Exercise the remote policy wire protocol against the reference adapter.

Requires the adapter package (pip install -e adapter/). Starts a stub
server in-process, routes a sampled trajectory through it, and shows the
request/response exchange.

Run:  python demos/06_remote_protocol.py
"""

import json
import threading
import urllib.request

import numpy as np

from tgrpo.env import candidate_actions, initial_state
from tgrpo.remote import RemotePolicy, RemotePolicyEndpoint, build_act_request
from tgrpo.retrieval import PruneConfig
from tgrpo.sampling import sample_trajectory
from tgrpo.synth import SynthSpec, generate

try:
    from tgrpo_adapter.server import make_server
except ImportError:
    raise SystemExit("install the adapter first: pip install -e adapter/")

server = make_server("stub", 0)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_port}"

with urllib.request.urlopen(url + "/health") as resp:
    print("health:", json.loads(resp.read()))

kg, cases = generate(
    SynthSpec(n_entities=20, n_relations=6, hop_mix={2: 1}, distractors_per_edge=1, seed=6)
)
case = cases[0]
state = initial_state(kg, case.question, PruneConfig(p=8))
request = build_act_request(state, candidate_actions(state), 1.0)
print("\nwire request:")
print(json.dumps(request, indent=2))

policy = RemotePolicy(RemotePolicyEndpoint(url))
trajectory = sample_trajectory(
    kg, case.question, policy, 1.0, 3, PruneConfig(p=8), np.random.default_rng(0)
)
print("\ntrajectory chosen by the stub policy:")
for step in trajectory.steps:
    print(f"  depth {step.state.depth}: {step.action.render(kg)}"
          f"   ({step.action.rationale})")
print("final answer:", trajectory.final_answer.render(kg),
      "| terminated by:", trajectory.terminated_by)

server.shutdown()
