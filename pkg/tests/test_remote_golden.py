"""Replay recorded wire transcripts; runs without the adapter installed."""

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tgrpo.env import (
    apply_hop,
    candidate_actions,
    initial_state,
    masked_candidates,
)
from tgrpo.remote import RemotePolicyEndpoint, remote_act
from tgrpo.retrieval import PruneConfig

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures", "golden_transcripts.jsonl")


def load_transcripts():
    with open(FIXTURES, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def fixture_states(chain_kg, chain_question):
    cfg = PruneConfig(p=16)
    s0 = initial_state(chain_kg, chain_question, cfg)
    hop11 = next(a for a in candidate_actions(s0) if a.is_hop and a.target == 11)
    s1 = apply_hop(chain_kg, s0, hop11, cfg)
    hop12 = next(a for a in candidate_actions(s1) if a.is_hop and a.target == 12)
    s2 = apply_hop(chain_kg, s1, hop12, cfg)
    return {
        "depth0-full": (s0, candidate_actions(s0), 0.7),
        "depth1-full": (s1, candidate_actions(s1), 1.0),
        "depth2-masked": (s2, masked_candidates(s2), 0.2),
    }


class ReplayHandler(BaseHTTPRequestHandler):
    expected_request = b""
    canned_response = b""
    mismatch = None

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        if body != self.expected_request:
            type(self).mismatch = (body, self.expected_request)
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(self.canned_response)))
        self.end_headers()
        self.wfile.write(self.canned_response)

    def log_message(self, *args):
        pass


@pytest.mark.parametrize("record", load_transcripts(), ids=lambda r: r["name"])
def test_golden_transcripts_replay(record, chain_kg, chain_question):
    states = fixture_states(chain_kg, chain_question)
    state, candidates, temperature = states[record["name"]]

    handler = type(
        "Handler",
        (ReplayHandler,),
        {
            "expected_request": record["request"].encode("utf-8"),
            "canned_response": record["response"].encode("utf-8"),
            "mismatch": None,
        },
    )
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    try:
        endpoint = RemotePolicyEndpoint(
            f"http://127.0.0.1:{httpd.server_port}", retries=0
        )
        action, rationale, logprobs = remote_act(
            endpoint, state, temperature, candidates
        )
    finally:
        httpd.shutdown()

    assert handler.mismatch is None, (
        f"client request drifted from the recorded bytes:\n"
        f"sent     {handler.mismatch and handler.mismatch[0]}\n"
        f"recorded {handler.mismatch and handler.mismatch[1]}"
    )
    reply = json.loads(record["response"])
    assert action == candidates[reply["choice"]]
    assert rationale == reply["rationale"]
    assert logprobs is None


def test_transcripts_cover_masked_and_unmasked():
    names = {r["name"] for r in load_transcripts()}
    assert "depth0-full" in names
    assert "depth2-masked" in names
