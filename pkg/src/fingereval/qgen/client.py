"""LLM client abstraction for question generation.

Wire format: request ``{template_id, rendered_prompt, max_tokens,
temperature}``, response ``{text}``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from fingereval.errors import ClientError
from fingereval.qgen.models import LlmExchange

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class LlmRequest:
    template_id: str
    rendered_prompt: str
    max_tokens: int = 1024
    temperature: float = 0.0


@dataclass(frozen=True)
class LlmResponse:
    text: str


class LlmClient(Protocol):
    # True when responses never vary and retries need no backoff
    deterministic: bool

    def complete(self, request: LlmRequest) -> LlmResponse: ...


def prompt_key(rendered_prompt: str) -> str:
    return hashlib.sha256(rendered_prompt.encode("utf-8")).hexdigest()


class MockLlmClient:
    """Replays canned responses keyed by the sha256 of the rendered prompt."""

    deterministic = True

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path: str | Path) -> MockLlmClient:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def add(self, rendered_prompt: str, text: str) -> None:
        self.responses[prompt_key(rendered_prompt)] = text

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.responses, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    def complete(self, request: LlmRequest) -> LlmResponse:
        key = prompt_key(request.rendered_prompt)
        try:
            return LlmResponse(self.responses[key])
        except KeyError:
            raise ClientError(f"no canned response for {request.template_id} prompt {key[:12]}") from None


class HttpLlmClient:
    """POSTs the wire-format request as JSON and reads ``{"text": ...}`` back."""

    deterministic = False

    def __init__(self, url: str, timeout: float = 60.0, transport: httpx.BaseTransport | None = None):
        self.url = url
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, request: LlmRequest) -> LlmResponse:
        try:
            resp = self._client.post(self.url, json=asdict(request))
            resp.raise_for_status()
            return LlmResponse(str(resp.json()["text"]))
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ClientError(f"{self.url}: {exc}") from exc


def call_with_retry(
    client: LlmClient,
    request: LlmRequest,
    max_attempts: int = MAX_ATTEMPTS,
    backoff_s: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[LlmResponse, list[LlmExchange]]:
    """Call ``client`` with exponential backoff; raises ClientError when attempts run out."""
    exchanges: list[LlmExchange] = []
    for attempt in range(1, max_attempts + 1):
        t0 = time.perf_counter()
        try:
            response = client.complete(request)
        except Exception as exc:  # any transport failure is retried
            latency = (time.perf_counter() - t0) * 1000
            exchanges.append(LlmExchange(request.template_id, request.rendered_prompt, "", latency, attempt, str(exc)))
            log.warning("%s attempt %d/%d failed: %s", request.template_id, attempt, max_attempts, exc)
            if attempt < max_attempts and not getattr(client, "deterministic", False):
                sleep(backoff_s * 2 ** (attempt - 1))
            continue
        latency = (time.perf_counter() - t0) * 1000
        exchanges.append(LlmExchange(request.template_id, request.rendered_prompt, response.text, latency, attempt))
        return response, exchanges
    raise ClientError(f"{request.template_id}: failed after {max_attempts} attempts: {exchanges[-1].error}")
