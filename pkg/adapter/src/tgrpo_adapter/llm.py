"""Upstream LLM client: renders the request as a prompt, extracts an index.

The model is constrained to reply with a single candidate index; malformed
replies are retried up to 2 times before the handler reports an upstream
protocol failure. The prompt template is versioned here and is not part
of the wire contract.
"""

from __future__ import annotations

import json
import os
import re
import urllib.request

PROMPT_VERSION = "tgrpo-adapter-prompt/1"

_PROMPT = """You are navigating a temporal knowledge graph to answer a question.

Question: {question}

Facts already visited:
{history}

Current entity: {central}
Facts around the current entity:
{subgraph}

Possible moves:
{candidates}

Reply with the number of the single best move and nothing else."""


class UpstreamError(Exception):
    pass


def build_prompt(request: dict) -> str:
    def block(lines):
        return "\n".join(f"- {line}" for line in lines) if lines else "(none)"

    moves = "\n".join(f"{i}: {c}" for i, c in enumerate(request["candidates"]))
    return _PROMPT.format(
        question=request["question"],
        history=block(request["history"]),
        central=request["central"],
        subgraph=block(request["subgraph"]),
        candidates=moves,
    )


def extract_index(text: str, n_candidates: int) -> int | None:
    match = re.search(r"-?\d+", text)
    if match is None:
        return None
    value = int(match.group())
    if 0 <= value < n_candidates:
        return value
    return None


class LlmClient:
    """Minimal chat-completions client; credentials come from the env."""

    def __init__(self, config: dict):
        self.api_url = config.get("api_url", "")
        self.model = config.get("model", "")
        self.key_env = config.get("api_key_env", "TGRPO_LLM_API_KEY")
        self.timeout = float(config.get("timeout", 30.0))
        if not self.api_url or not self.model:
            raise UpstreamError("llm mode requires api_url and model in the config")
        if not os.environ.get(self.key_env):
            raise UpstreamError(f"llm mode requires the {self.key_env} env variable")

    def complete(self, prompt: str, temperature: float) -> str:
        body = json.dumps(
            {
                "model": self.model,
                "temperature": temperature,
                "messages": [{"role": "user", "content": prompt}],
            }
        ).encode("utf-8")
        req = urllib.request.Request(
            self.api_url,
            data=body,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {os.environ[self.key_env]}",
            },
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
            return doc["choices"][0]["message"]["content"]
        except Exception as exc:
            raise UpstreamError(f"upstream request failed: {exc}") from None

    def choose(self, request: dict) -> dict:
        prompt = build_prompt(request)
        last = ""
        for _ in range(3):  # first try + 2 retries on malformed output
            last = self.complete(prompt, float(request.get("temperature", 1.0)))
            idx = extract_index(last, len(request["candidates"]))
            if idx is not None:
                return {"choice": idx, "rationale": last.strip()}
        raise UpstreamError(f"model kept returning malformed output: {last[:200]!r}")
