"""Deterministic stub policy: a pure function of the request body.

The choice hashes the question text together with the history length (the
request-level stand-in for question id and depth), so identical requests
always produce identical responses and protocol tests can be replayed
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_INTERVAL_RE = re.compile(r"\[(-?\d+), (-?\d+)\]")


def stub_choice(question: str, history_len: int, n_candidates: int) -> int:
    digest = hashlib.sha256(f"{question}|{history_len}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n_candidates


def stub_response(request: dict) -> dict:
    choice = stub_choice(
        request["question"], len(request["history"]), len(request["candidates"])
    )
    return {
        "choice": choice,
        "rationale": f"stub selects candidate {choice} of {len(request['candidates'])}",
    }


def stub_scores(question: str, facts: list[str]) -> list[float]:
    """Lexical-overlap + temporal-match relevance, the /score extension."""
    q = set(_TOKEN_RE.findall(question.lower()))
    years = [int(t) for t in q if t.isdigit()]
    scores = []
    for fact in facts:
        overlap = len(q & set(_TOKEN_RE.findall(fact.lower()))) / len(q) if q else 0.0
        match = 0.0
        interval = _INTERVAL_RE.search(fact)
        if interval:
            lo, hi = int(interval.group(1)), int(interval.group(2))
            if any(lo <= y <= hi for y in years):
                match = 1.0
        scores.append(0.7 * overlap + 0.3 * match)
    return scores
