import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from tgrpo.env import candidate_actions, initial_state
from tgrpo.errors import ProtocolError, RemoteUnavailableError
from tgrpo.remote import (
    PROTOCOL_VERSION,
    RemotePolicy,
    RemotePolicyEndpoint,
    RemoteScorer,
    build_act_request,
    remote_act,
)
from tgrpo.retrieval import PruneConfig


class _Handler(BaseHTTPRequestHandler):
    behavior = staticmethod(lambda req: {"choice": 0, "rationale": "echo"})
    requests = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).requests.append((self.path, body))
        reply = type(self).behavior(json.loads(body))
        if isinstance(reply, tuple):
            status, payload = reply
        else:
            status, payload = 200, reply
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    handler = type("Handler", (_Handler,), {"requests": []})
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{httpd.server_port}"
    yield url, handler
    httpd.shutdown()


@pytest.fixture
def chain_state(chain_kg, chain_question):
    return initial_state(chain_kg, chain_question, PruneConfig(p=16))


def test_request_shape(chain_state):
    cands = candidate_actions(chain_state)
    req = build_act_request(chain_state, cands, 0.7)
    assert list(req) == [
        "version", "question", "history", "subgraph", "central", "candidates",
        "temperature",
    ]
    assert req["version"] == PROTOCOL_VERSION
    assert req["central"] == "entity_alpha_10"
    assert req["temperature"] == 0.7
    assert len(req["candidates"]) == len(cands)
    assert req["candidates"][0].startswith("HOP ")
    assert any(c.startswith("ANSWER ENTITY ") for c in req["candidates"])
    assert any(c.startswith("ANSWER TIME [") for c in req["candidates"])
    assert all(" | " in s for s in req["subgraph"])


def test_echo_stub_returns_first_candidate(server, chain_state):
    url, handler = server
    endpoint = RemotePolicyEndpoint(url, retries=0)
    action, rationale, logprobs = remote_act(endpoint, chain_state, 1.0)
    assert action == candidate_actions(chain_state)[0]
    assert rationale == "echo"
    assert logprobs is None
    path, body = handler.requests[-1]
    assert path == "/act"
    assert json.loads(body)["version"] == PROTOCOL_VERSION


def test_out_of_range_choice_is_protocol_error(server, chain_state):
    url, handler = server
    n = len(candidate_actions(chain_state))
    handler.behavior = staticmethod(lambda req: {"choice": n, "rationale": "bad"})
    with pytest.raises(ProtocolError):
        remote_act(RemotePolicyEndpoint(url, retries=0), chain_state, 1.0)


def test_malformed_responses_are_protocol_errors(server, chain_state):
    url, handler = server
    endpoint = RemotePolicyEndpoint(url, retries=0)
    for payload in (
        {"rationale": "missing choice"},
        {"choice": "zero"},
        {"choice": True},
        {"choice": 0, "rationale": 7},
        {"choice": 0, "logprobs": [0.1]},
    ):
        handler.behavior = staticmethod(lambda req, p=payload: p)
        with pytest.raises(ProtocolError):
            remote_act(endpoint, chain_state, 1.0)
    handler.behavior = staticmethod(lambda req: (200, b"this is not json"))
    with pytest.raises(ProtocolError):
        remote_act(endpoint, chain_state, 1.0)


def test_http_error_body_is_protocol_error(server, chain_state):
    url, handler = server
    handler.behavior = staticmethod(lambda req: (400, {"error": "empty candidates"}))
    with pytest.raises(ProtocolError, match="400"):
        remote_act(RemotePolicyEndpoint(url, retries=0), chain_state, 1.0)


def test_unreachable_endpoint_retries_then_fails(chain_state):
    endpoint = RemotePolicyEndpoint("http://127.0.0.1:9", retries=2, timeout=0.2)
    with pytest.raises(RemoteUnavailableError, match="3 attempts"):
        remote_act(endpoint, chain_state, 1.0)


def test_remote_policy_uses_logprobs(server, chain_state):
    url, handler = server
    n = len(candidate_actions(chain_state))

    def behave(req):
        lp = [-float(i + 1) for i in range(n)]
        return {"choice": 2, "rationale": "pick 2", "logprobs": lp}

    handler.behavior = staticmethod(behave)
    policy = RemotePolicy(RemotePolicyEndpoint(url, retries=0))
    action, lp = policy.act(chain_state, 1.0, np.random.default_rng(0))
    assert action == candidate_actions(chain_state)[2]
    assert lp == -3.0
    assert action.rationale == "pick 2"


def test_remote_scorer_roundtrip(server):
    url, handler = server
    handler.behavior = staticmethod(lambda req: {"scores": [0.25]})
    scorer = RemoteScorer(url)
    assert scorer("question", "fact text") == 0.25
    path, body = handler.requests[-1]
    assert path == "/score"
    req = json.loads(body)
    assert req["facts"] == ["fact text"]

    handler.behavior = staticmethod(lambda req: {"scores": [0.1, 0.2]})
    with pytest.raises(ProtocolError):
        scorer("q", "f")
