"""Teacher labeling against an OpenAI-compatible chat-completions endpoint.

Every prompt is sent as a single user message with temperature 0 and JSON
mode requested; the raw message content comes back as the training target.
Responses are cached on disk keyed by a content fingerprint of
(model, prompt, temperature), so regenerating identical prompts never
re-bills, and a second batch run over the same inputs makes zero network
calls. Content that fails a strict JSON parse is kept with parsed_ok=false
rather than dropped; the curriculum treats such samples as hard.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .curriculum import minify_json
from .errors import TeacherServiceError, ValidationError
from .jsonl import read_json, write_json
from .prompting import PromptRecord

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-1106"
API_KEY_ENV_VAR = "OPENAI_API_KEY"
CHAT_COMPLETIONS_PATH = "/v1/chat/completions"


@dataclass(frozen=True)
class TeacherConfig:
    endpoint_url: str
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    json_mode: bool = True
    role: str = "user"
    max_retries: int = 5
    backoff_seconds: tuple = (0.5, 1.0, 2.0, 4.0, 8.0)
    max_concurrent_requests: int = 4
    cache_dir: str | None = None
    failure_threshold: int = 10
    timeout_seconds: float = 120.0

    def __post_init__(self):
        if not self.endpoint_url:
            raise ValidationError("endpoint_url is empty")
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.role not in ("user", "system"):
            raise ValidationError(f"role must be user or system, got {self.role!r}")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ValidationError("max_concurrent_requests must be >= 1")
        if self.failure_threshold < 0:
            raise ValidationError("failure_threshold must be >= 0")
        if not self.backoff_seconds:
            raise ValidationError("backoff_seconds must not be empty")


@dataclass(frozen=True)
class TeacherLabel:
    sample_id: str
    raw_response: str
    parsed_ok: bool
    canonical_target: str
    model_name: str
    request_fingerprint: str

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "raw_response": self.raw_response,
            "parsed_ok": self.parsed_ok,
            "canonical_target": self.canonical_target,
            "model_name": self.model_name,
            "request_fingerprint": self.request_fingerprint,
        }

    @classmethod
    def from_row(cls, row: dict) -> "TeacherLabel":
        try:
            return cls(
                sample_id=str(row["sample_id"]),
                raw_response=str(row["raw_response"]),
                parsed_ok=bool(row["parsed_ok"]),
                canonical_target=str(row["canonical_target"]),
                model_name=str(row["model_name"]),
                request_fingerprint=str(row["request_fingerprint"]),
            )
        except KeyError as exc:
            raise ValidationError(f"label record missing field {exc}") from exc


def request_fingerprint(model_name: str, prompt_text: str, temperature: float) -> str:
    payload = json.dumps(
        {"model": model_name, "prompt": prompt_text, "temperature": temperature},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cache_path(cache_dir: str, fingerprint: str) -> Path:
    return Path(cache_dir) / f"{fingerprint}.json"


def _cache_read(cache_dir: str | None, fingerprint: str) -> str | None:
    if cache_dir is None:
        return None
    path = _cache_path(cache_dir, fingerprint)
    if not path.exists():
        return None
    return str(read_json(path)["content"])


def _cache_write(cache_dir: str | None, fingerprint: str, content: str):
    if cache_dir is None:
        return
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    write_json(_cache_path(cache_dir, fingerprint), {"content": content})


def _build_label(sample_id: str, content: str, config: TeacherConfig, fingerprint: str) -> TeacherLabel:
    minified = minify_json(content)
    return TeacherLabel(
        sample_id=sample_id,
        raw_response=content,
        parsed_ok=minified is not None,
        canonical_target=minified if minified is not None else content,
        model_name=config.model_name,
        request_fingerprint=fingerprint,
    )


def _request_once(session: requests.Session, prompt: PromptRecord, config: TeacherConfig) -> requests.Response:
    url = config.endpoint_url.rstrip("/") + CHAT_COMPLETIONS_PATH
    body = {
        "model": config.model_name,
        "messages": [{"role": config.role, "content": prompt.prompt_text}],
        "temperature": config.temperature,
    }
    if config.json_mode:
        body["response_format"] = {"type": "json_object"}
    headers = {}
    api_key = os.environ.get(API_KEY_ENV_VAR)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    return session.post(url, json=body, headers=headers, timeout=config.timeout_seconds)


def _fetch_content(session: requests.Session, prompt: PromptRecord, config: TeacherConfig) -> str:
    attempts = config.max_retries + 1
    last_error = "no attempt made"
    for attempt in range(attempts):
        if attempt > 0:
            delay = config.backoff_seconds[min(attempt - 1, len(config.backoff_seconds) - 1)]
            if delay > 0:
                time.sleep(delay)
        try:
            response = _request_once(session, prompt, config)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
            logger.warning("teacher request for %s failed (%s), attempt %d/%d", prompt.sample_id, exc, attempt + 1, attempts)
            continue
        if response.status_code == 200:
            try:
                data = response.json()
                return str(data["choices"][0]["message"]["content"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TeacherServiceError(
                    f"teacher returned an unparseable completion body for {prompt.sample_id}: {exc}"
                ) from exc
        if response.status_code == 429 or response.status_code >= 500:
            last_error = f"HTTP {response.status_code}"
            logger.warning("teacher returned %d for %s, attempt %d/%d", response.status_code, prompt.sample_id, attempt + 1, attempts)
            continue
        raise TeacherServiceError(
            f"teacher rejected request for {prompt.sample_id}: HTTP {response.status_code}: {response.text[:200]}"
        )
    raise TeacherServiceError(f"teacher request for {prompt.sample_id} failed after {attempts} attempts ({last_error})")


def label(prompt: PromptRecord, config: TeacherConfig, session: requests.Session | None = None) -> TeacherLabel:
    """Label one prompt, consulting the response cache before the network."""
    fingerprint = request_fingerprint(config.model_name, prompt.prompt_text, config.temperature)
    cached = _cache_read(config.cache_dir, fingerprint)
    if cached is not None:
        return _build_label(prompt.sample_id, cached, config, fingerprint)
    if session is None:
        session = requests.Session()
    content = _fetch_content(session, prompt, config)
    _cache_write(config.cache_dir, fingerprint, content)
    return _build_label(prompt.sample_id, content, config, fingerprint)


def label_batch(prompts: Sequence[PromptRecord], config: TeacherConfig) -> tuple[list[TeacherLabel], dict]:
    """Label prompts with bounded concurrency.

    Returns labels in prompt order (failed prompts omitted) and a report
    {cache_hits, calls, failures, parse_failures} where calls counts
    prompts served over the network. Aborts by raising once failures
    exceed config.failure_threshold.
    """
    local = threading.local()
    lock = threading.Lock()
    abort = threading.Event()
    state = {"failures": 0, "cache_hits": 0, "calls": 0}

    def work(prompt: PromptRecord) -> TeacherLabel | None:
        if abort.is_set():
            return None
        fingerprint = request_fingerprint(config.model_name, prompt.prompt_text, config.temperature)
        cached = _cache_read(config.cache_dir, fingerprint)
        if cached is not None:
            with lock:
                state["cache_hits"] += 1
            return _build_label(prompt.sample_id, cached, config, fingerprint)
        if not hasattr(local, "session"):
            local.session = requests.Session()
        try:
            result = label(prompt, config, local.session)
        except TeacherServiceError as exc:
            logger.error("labeling failed for %s: %s", prompt.sample_id, exc)
            with lock:
                state["failures"] += 1
                if state["failures"] > config.failure_threshold:
                    abort.set()
            return None
        with lock:
            state["calls"] += 1
        return result

    with ThreadPoolExecutor(max_workers=config.max_concurrent_requests) as pool:
        results = list(pool.map(work, prompts))

    if abort.is_set():
        raise TeacherServiceError(
            f"aborting: {state['failures']} teacher failures exceeded threshold {config.failure_threshold}"
        )
    labels = [r for r in results if r is not None]
    report = {
        "cache_hits": state["cache_hits"],
        "calls": state["calls"],
        "failures": state["failures"],
        "parse_failures": sum(1 for lab in labels if not lab.parsed_ok),
    }
    return labels, report
