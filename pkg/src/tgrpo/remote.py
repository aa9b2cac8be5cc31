"""HTTP client for remote (LLM-backed) policies, protocol "tgrpo-policy/1".

Requests render the state as text: verbalized history and subgraph facts,
the central entity label, and one deterministic string per candidate
action. The server answers with a candidate index, which keeps free-text
parsing out of the loop entirely. Remote policies are sample-only; no
gradients flow through them.
"""

from __future__ import annotations

import dataclasses
import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ProtocolError, RemoteUnavailableError
from .env import Action, ReasoningState, candidate_actions

PROTOCOL_VERSION = "tgrpo-policy/1"


@dataclass
class RemotePolicyEndpoint:
    url: str
    retries: int = 2
    timeout: float = 10.0
    max_in_flight: int = 8

    def __post_init__(self):
        self._gate = threading.Semaphore(self.max_in_flight)

    def post(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        req = urllib.request.Request(
            self.url.rstrip("/") + path,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with self._gate:
                    with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                        raw = resp.read()
                break
            except urllib.error.HTTPError as exc:
                # The server spoke HTTP: a 4xx/5xx is a protocol failure,
                # not a transport failure, so do not retry it away.
                detail = exc.read().decode("utf-8", errors="replace")
                raise ProtocolError(
                    f"remote policy returned HTTP {exc.code}: {detail}"
                ) from None
            except (urllib.error.URLError, OSError) as exc:
                last_exc = exc
        else:
            raise RemoteUnavailableError(
                f"remote policy unreachable after {self.retries + 1} attempts: {last_exc}"
            )
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"remote policy sent invalid JSON: {exc}") from None


def build_act_request(
    state: ReasoningState, candidates: list[Action], temperature: float
) -> dict:
    kg = state.kg
    return {
        "version": PROTOCOL_VERSION,
        "question": state.question.text,
        "history": [kg.verbalize(f) for f in state.history],
        "subgraph": [kg.verbalize(f) for f in state.subgraph],
        "central": kg.entity_label(state.central),
        "candidates": [a.render(kg) for a in candidates],
        "temperature": float(temperature),
    }


def remote_act(
    endpoint: RemotePolicyEndpoint,
    state: ReasoningState,
    temperature: float,
    candidates: Optional[list[Action]] = None,
) -> tuple[Action, str, Optional[list[float]]]:
    """Ask the remote policy to choose a candidate.

    Returns (chosen action with the server's rationale attached, rationale,
    per-candidate log-probs when the server reports them). A malformed or
    out-of-range response raises ProtocolError; the caller marks the
    trajectory failed rather than repairing it.
    """
    if candidates is None:
        candidates = candidate_actions(state)
    reply = endpoint.post("/act", build_act_request(state, candidates, temperature))

    if not isinstance(reply, dict) or "choice" not in reply:
        raise ProtocolError(f"response missing 'choice': {reply!r}")
    choice = reply["choice"]
    if not isinstance(choice, int) or isinstance(choice, bool):
        raise ProtocolError(f"'choice' must be an integer, got {choice!r}")
    if not 0 <= choice < len(candidates):
        raise ProtocolError(
            f"choice {choice} out of range for {len(candidates)} candidates"
        )
    rationale = reply.get("rationale", "")
    if not isinstance(rationale, str):
        raise ProtocolError("'rationale' must be a string")
    logprobs = reply.get("logprobs")
    if logprobs is not None:
        if not isinstance(logprobs, list) or len(logprobs) != len(candidates):
            raise ProtocolError("'logprobs' must list one float per candidate")
        logprobs = [float(x) for x in logprobs]
    action = dataclasses.replace(candidates[choice], rationale=rationale)
    return action, rationale, logprobs


class RemotePolicy:
    """PolicyLike adapter over a remote endpoint (sample-only)."""

    def __init__(self, endpoint: RemotePolicyEndpoint):
        self.endpoint = endpoint

    def act(
        self,
        state: ReasoningState,
        temperature: float,
        rng: np.random.Generator,
        candidates: Optional[list[Action]] = None,
    ) -> tuple[Action, float]:
        del rng  # choice is made server-side
        action, _, logprobs = remote_act(self.endpoint, state, temperature, candidates)
        if logprobs is not None:
            cands = candidates if candidates is not None else candidate_actions(state)
            return action, float(logprobs[cands.index(action)])
        return action, 0.0


class RemoteScorer:
    """Relevance scorer backed by the wire protocol's /score extension."""

    def __init__(self, url: str, retries: int = 2, timeout: float = 10.0):
        self.endpoint = RemotePolicyEndpoint(url, retries=retries, timeout=timeout)

    def __call__(self, question: str, fact_text: str) -> float:
        reply = self.endpoint.post(
            "/score",
            {"version": PROTOCOL_VERSION, "question": question, "facts": [fact_text]},
        )
        scores = reply.get("scores") if isinstance(reply, dict) else None
        if not isinstance(scores, list) or len(scores) != 1:
            raise ProtocolError(f"/score must return one score, got {reply!r}")
        return float(scores[0])
