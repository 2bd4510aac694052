"""LLM providers: an HTTP chat-completion client and a scripted mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

import httpx

from .errors import EvocafError

log = logging.getLogger(__name__)

ENV_BASE_URL = "EVOCAF_LLM_BASE_URL"
ENV_API_KEY = "EVOCAF_LLM_API_KEY"
ENV_MODEL = "EVOCAF_LLM_MODEL"

DEFAULT_TEMPERATURE = {"init": 1.0, "crossover": 0.7, "mutation": 0.7}


class LlmError(EvocafError):
    pass


class ConfigError(LlmError):
    pass


class ProviderUnavailable(LlmError):
    pass


class ProtocolError(LlmError):
    pass


class ExtractionError(LlmError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 1.0
    max_tokens: int = 2048
    model_name: str = ""
    kind: str = "init"

    def __post_init__(self):
        if not self.system_prompt.strip() or not self.user_prompt.strip():
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")

    def digest(self) -> str:
        h = hashlib.sha256((self.system_prompt + "\0" + self.user_prompt).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class LlmResponse:
    text: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


class Provider(Protocol):
    def complete(self, req: LlmRequest) -> LlmResponse: ...


class HttpProvider:
    """Client for JSON chat-completion endpoints.

    Retries 429 and 5xx responses (and transport errors) with exponential
    backoff, at most ``max_attempts`` tries and ``max_backoff_total``
    seconds of sleeping per call.
    """

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: float = 120.0,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        max_backoff_total: float = 60.0,
        max_in_flight: int = 2,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.base_url = base_url or os.environ.get(ENV_BASE_URL)
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.model = model or os.environ.get(ENV_MODEL, "")
        if not self.base_url:
            raise ConfigError(f"no endpoint configured; set {ENV_BASE_URL}")
        if not self.api_key:
            raise ConfigError(f"no API key configured; set {ENV_API_KEY}")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.max_backoff_total = max_backoff_total
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def _payload(self, req: LlmRequest) -> dict:
        return {
            "model": req.model_name or self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }

    def complete(self, req: LlmRequest) -> LlmResponse:
        payload = self._payload(req)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        slept = 0.0
        last_err = "no attempt made"
        with self._slots:
            for attempt in range(1, self.max_attempts + 1):
                t0 = time.perf_counter()
                try:
                    resp = self._client.post(self.url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    status, last_err = None, f"transport error: {exc}"
                else:
                    status = resp.status_code
                    last_err = f"HTTP {status}"
                latency = time.perf_counter() - t0
                log.info(
                    "llm request %s attempt %d status %s latency %.3fs",
                    req.digest(), attempt, status, latency,
                )
                if status is not None and status < 400:
                    return self._parse(resp, latency)
                if status is not None and status != 429 and status < 500:
                    raise ProviderUnavailable(f"request rejected: HTTP {status}: {resp.text[:200]}")
                if attempt == self.max_attempts:
                    break
                delay = min(self.backoff_base * 2 ** (attempt - 1), self.max_backoff_total - slept)
                if delay <= 0:
                    break
                time.sleep(delay)
                slept += delay
        raise ProviderUnavailable(f"giving up after {attempt} attempts ({last_err})")

    @staticmethod
    def _parse(resp: httpx.Response, latency: float) -> LlmResponse:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion body: {exc!r}") from exc
        if not isinstance(text, str):
            raise ProtocolError("completion content is not text")
        return LlmResponse(text=text, usage=body.get("usage") or {}, latency=latency)

    def close(self):
        self._client.close()


class MockProvider:
    """Replays scripted completions.

    ``script`` is either one list shared by every prompt kind or a mapping
    from kind (``init``, ``crossover``, ``mutation``) to its own list.
    Lists cycle when exhausted. Every request is kept in ``calls``.
    """

    def __init__(self, script: Union[Sequence[str], dict]):
        if isinstance(script, dict):
            self._queues = {k: [_as_text(v) for v in vs] for k, vs in script.items()}
        else:
            self._queues = {"*": [_as_text(v) for v in script]}
        if not any(self._queues.values()):
            raise ConfigError("mock script is empty")
        self._pos = {k: 0 for k in self._queues}
        self._lock = threading.Lock()
        self.calls: list[LlmRequest] = []

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "MockProvider":
        return cls(json.loads(Path(path).read_text()))

    def complete(self, req: LlmRequest) -> LlmResponse:
        with self._lock:
            key = req.kind if req.kind in self._queues else "*"
            if key not in self._queues:
                raise ConfigError(f"mock script has no responses for {req.kind!r}")
            queue = self._queues[key]
            text = queue[self._pos[key] % len(queue)]
            self._pos[key] += 1
            self.calls.append(req)
        return LlmResponse(text=text, usage={}, latency=0.0)

    def count(self, kind: str) -> int:
        return sum(1 for c in self.calls if c.kind == kind)


def _as_text(item) -> str:
    if isinstance(item, str):
        return item
    return f"{item.get('description', '')}\n```\n{item['code']}\n```"


def complete(req: LlmRequest, provider: Provider) -> LlmResponse:
    return provider.complete(req)


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_program(response_text: str) -> tuple[str, str]:
    """Split a completion into (description, source of the last fenced block)."""
    blocks = list(_FENCE_RE.finditer(response_text))
    if not blocks:
        raise ExtractionError("response contains no fenced code block")
    source = blocks[-1].group(1).strip()
    if not source:
        raise ExtractionError("fenced code block is empty")
    description = response_text[: blocks[0].start()].strip()
    if not description:
        description = _FENCE_RE.sub("", response_text).strip()
    return description, source
