"""A local stand-in for the teacher endpoint, used by tests and --stub-teacher.

The stub serves the OpenAI chat-completions wire shape from a stdlib HTTP
server and answers deterministically: it reads the document back out of
the prompt and picks answer words by hashing, so identical prompts always
get identical labels and different prompts usually differ. A failure
script can inject HTTP errors (e.g. [429, 429]) before it starts
succeeding, and a fixed response can replace the generated one.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import ValidationError
from .ingest import SROIE_KEYS
from .prompting import DOC_END, extract_document

_NUMBERED_RE = re.compile(r"(?m)^(\d+)\. ")


def stub_answer(prompt_text: str) -> str:
    """Deterministic JSON answer for one of this package's prompts."""
    try:
        document = extract_document(prompt_text)
    except ValidationError:
        document = prompt_text
    words = document.split() or ["unknown"]
    tail = prompt_text.rsplit(DOC_END, 1)[-1]

    numbers = _NUMBERED_RE.findall(tail)
    if numbers:
        keys = numbers
    else:
        keys = [k for k in SROIE_KEYS if f'"{k}"' in tail] or ["1"]

    binary = 'the string "1"' in tail  # table-support prompts want "1"/"0"
    answer = {}
    for key in keys:
        digest = int.from_bytes(hashlib.sha256(f"{key}:{document}".encode("utf-8")).digest()[:8], "big")
        if binary:
            answer[key] = "1" if digest % 2 == 0 else "0"
        else:
            picked = [words[(digest + i) % len(words)] for i in range(digest % 3 + 1)]
            answer[key] = " ".join(picked)
    return json.dumps(answer, ensure_ascii=False)


class StubTeacherServer:
    """In-process chat-completions endpoint on a random localhost port."""

    def __init__(
        self,
        failure_script: list | None = None,
        fixed_content: str | None = None,
        handler_delay: float = 0.0,
    ):
        self.failure_script = list(failure_script or [])
        self.fixed_content = fixed_content
        self.handler_delay = handler_delay
        self.request_count = 0
        self.request_bodies: list[dict] = []
        self.request_headers: list[dict] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                stub._handle(self)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02), daemon=True
        )

    @property
    def endpoint_url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}"

    def start(self) -> "StubTeacherServer":
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "StubTeacherServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _handle(self, handler: BaseHTTPRequestHandler):
        with self._lock:
            self.request_count += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            scripted = self.failure_script.pop(0) if self.failure_script else None
        try:
            if self.handler_delay > 0:
                time.sleep(self.handler_delay)
            length = int(handler.headers.get("Content-Length", 0))
            body = json.loads(handler.rfile.read(length)) if length else {}
            with self._lock:
                self.request_bodies.append(body)
                self.request_headers.append(dict(handler.headers))

            if handler.path != "/v1/chat/completions":
                self._respond(handler, 404, {"error": "unknown path"})
                return
            if scripted is not None:
                self._respond(handler, scripted, {"error": f"scripted {scripted}"})
                return

            prompt_text = ""
            messages = body.get("messages") or []
            if messages:
                prompt_text = str(messages[0].get("content", ""))
            content = self.fixed_content if self.fixed_content is not None else stub_answer(prompt_text)
            self._respond(
                handler,
                200,
                {
                    "id": "stub-completion",
                    "object": "chat.completion",
                    "model": body.get("model", "stub"),
                    "choices": [
                        {
                            "index": 0,
                            "message": {"role": "assistant", "content": content},
                            "finish_reason": "stop",
                        }
                    ],
                },
            )
        finally:
            with self._lock:
                self.in_flight -= 1

    @staticmethod
    def _respond(handler: BaseHTTPRequestHandler, status: int, payload: dict):
        data = json.dumps(payload).encode("utf-8")
        handler.send_response(status)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(data)))
        handler.end_headers()
        handler.wfile.write(data)
