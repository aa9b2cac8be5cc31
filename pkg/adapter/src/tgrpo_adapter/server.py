"""HTTP server implementing POST /act, POST /score and GET /health."""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .llm import LlmClient, UpstreamError
from .stub import stub_response, stub_scores

PROTOCOL_VERSION = "tgrpo-policy/1"

_ACT_KEYS = {
    "version": str,
    "question": str,
    "history": list,
    "subgraph": list,
    "central": str,
    "candidates": list,
    "temperature": (int, float),
}


class RequestError(Exception):
    """Client-side protocol violation; reported as HTTP 400."""


def validate_act_request(doc) -> dict:
    if not isinstance(doc, dict):
        raise RequestError("request body must be a JSON object")
    for key, typ in _ACT_KEYS.items():
        if key not in doc:
            raise RequestError(f"missing key {key!r}")
        if not isinstance(doc[key], typ) or isinstance(doc[key], bool):
            raise RequestError(f"key {key!r} has the wrong type")
    if doc["version"] != PROTOCOL_VERSION:
        raise RequestError(
            f"unsupported protocol version {doc['version']!r}, "
            f"expected {PROTOCOL_VERSION!r}"
        )
    for key in ("history", "subgraph", "candidates"):
        if not all(isinstance(x, str) for x in doc[key]):
            raise RequestError(f"key {key!r} must be a list of strings")
    if not doc["candidates"]:
        raise RequestError("candidates must be nonempty")
    return doc


def validate_score_request(doc) -> dict:
    if not isinstance(doc, dict):
        raise RequestError("request body must be a JSON object")
    for key in ("version", "question", "facts"):
        if key not in doc:
            raise RequestError(f"missing key {key!r}")
    if doc["version"] != PROTOCOL_VERSION:
        raise RequestError(f"unsupported protocol version {doc['version']!r}")
    if not isinstance(doc["question"], str):
        raise RequestError("key 'question' must be a string")
    if not isinstance(doc["facts"], list) or not all(
        isinstance(x, str) for x in doc["facts"]
    ):
        raise RequestError("key 'facts' must be a list of strings")
    return doc


class AdapterHandler(BaseHTTPRequestHandler):
    mode = "stub"
    llm_client: Optional[LlmClient] = None

    def _send(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"version": PROTOCOL_VERSION})
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            doc = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._send(400, {"error": f"invalid JSON body: {exc}"})
            return

        try:
            if self.path == "/act":
                request = validate_act_request(doc)
                if self.mode == "stub":
                    self._send(200, stub_response(request))
                else:
                    self._send(200, self.llm_client.choose(request))
            elif self.path == "/score":
                request = validate_score_request(doc)
                self._send(
                    200, {"scores": stub_scores(request["question"], request["facts"])}
                )
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except RequestError as exc:
            self._send(400, {"error": str(exc)})
        except UpstreamError as exc:
            self._send(502, {"error": str(exc)})

    def log_message(self, *args):
        pass


def make_server(
    mode: str = "stub", port: int = 0, config: Optional[dict] = None
) -> ThreadingHTTPServer:
    if mode not in ("stub", "llm"):
        raise ValueError(f"mode must be 'stub' or 'llm', got {mode!r}")
    handler = type("Handler", (AdapterHandler,), {"mode": mode, "llm_client": None})
    if mode == "llm":
        handler.llm_client = LlmClient(config or {})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(mode: str = "stub", port: int = 8080, config: Optional[dict] = None) -> None:
    httpd = make_server(mode, port, config)
    print(f"tgrpo-adapter ({mode}) listening on port {httpd.server_port}")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
