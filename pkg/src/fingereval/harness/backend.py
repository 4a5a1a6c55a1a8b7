"""Inference backends that answer one question about one video."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from fingereval.errors import ClientError, FixtureMissing, NoAnswerTag
from fingereval.harness.dataset import read_jsonl
from fingereval.parse import extract_answer_token_position, token_offsets
from fingereval.scoring import AnswerLogits, LogitKind

ANSWER_TEMPLATE_ID = "answer/v1"
ANSWER_SYSTEM_PROMPT = (
    "You assess an AI-generated video. Answer the question with Yes or No inside "
    "<answer></answer>, then explain your judgement inside <reason></reason>."
)


@dataclass(frozen=True)
class BackendRequest:
    question_id: str
    media_ref: str
    question_text: str
    system_template_id: str = ANSWER_TEMPLATE_ID
    want_logprobs: bool = True
    top_k: int = 20


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top_k: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class BackendResponse:
    raw_text: str
    per_token: tuple[TokenLogprob, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> BackendResponse:
        per_token = tuple(
            TokenLogprob(t["token"], float(t["logprob"]), tuple((a["token"], float(a["logprob"])) for a in t.get("top_k", ())))
            for t in d.get("per_token") or ()
        )
        return cls(d["raw_text"], per_token)

    def to_dict(self) -> dict:
        return {
            "raw_text": self.raw_text,
            "per_token": [
                {"token": t.token, "logprob": t.logprob, "top_k": [{"token": a, "logprob": v} for a, v in t.top_k]}
                for t in self.per_token
            ],
        }


class BackendClient(Protocol):
    backend_id: str

    def query(self, request: BackendRequest) -> BackendResponse: ...


def answer_logits(response: BackendResponse, question_id: str | None = None) -> AnswerLogits | None:
    """Log-probs of the candidate tokens at the answer position, or None if unavailable.

    The candidates are the sampled token plus its top-k alternatives.
    """
    if not response.per_token:
        return None
    tokens = [t.token for t in response.per_token]
    text = "".join(tokens)
    try:
        idx = extract_answer_token_position(text, token_offsets(tokens))
    except NoAnswerTag:
        return None
    at = response.per_token[idx]
    entries: dict[str, float] = {at.token: at.logprob}
    for tok, lp in at.top_k:
        entries.setdefault(tok, lp)
    return AnswerLogits(tuple(entries.items()), LogitKind.FULL_VOCAB_LOGPROB, question_id, idx)


@dataclass
class MockBackend:
    """Replays canned responses keyed by question id."""

    fixtures: dict[str, BackendResponse]
    fallback: BackendResponse | None = None
    backend_id: str = "mock"
    calls: int = field(default=0, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def query(self, request: BackendRequest) -> BackendResponse:
        with self._lock:
            self.calls += 1
        resp = self.fixtures.get(request.question_id, self.fallback)
        if resp is None:
            raise FixtureMissing(f"no mock response for question {request.question_id!r}")
        if not request.want_logprobs:
            return BackendResponse(resp.raw_text)
        trimmed = tuple(TokenLogprob(t.token, t.logprob, t.top_k[: request.top_k]) for t in resp.per_token)
        return BackendResponse(resp.raw_text, trimmed)


def mock_backend(fixture_dir: str | Path) -> MockBackend:
    """Load ``responses.jsonl`` (``{question_id, raw_text, per_token}``) and optional ``fallback.json``."""
    fixture_dir = Path(fixture_dir)
    path = fixture_dir / "responses.jsonl"
    if not path.exists():
        raise FixtureMissing(f"{path} not found")
    fixtures = {str(rec["question_id"]): BackendResponse.from_dict(rec) for _, rec in read_jsonl(path)}
    fallback = None
    fb = fixture_dir / "fallback.json"
    if fb.exists():
        fallback = BackendResponse.from_dict(json.loads(fb.read_text(encoding="utf-8")))
    return MockBackend(fixtures, fallback, backend_id=f"mock:{fixture_dir.name}")


class OpenAICompatBackend:
    """Chat-completions client for servers that return per-token ``logprobs``.

    Frame sampling is the server's job; ``media_ref`` is passed as a video URL.
    """

    def __init__(self, url: str, model: str = "default", timeout: float = 120.0,
                 transport: httpx.BaseTransport | None = None):
        self.url = url.rstrip("/")
        self.model = model
        self.backend_id = f"http:{self.url}:{model}"
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def query(self, request: BackendRequest) -> BackendResponse:
        body = {
            "model": self.model,
            "temperature": 0.0,
            "messages": [
                {"role": "system", "content": ANSWER_SYSTEM_PROMPT},
                {"role": "user", "content": [
                    {"type": "video_url", "video_url": {"url": request.media_ref}},
                    {"type": "text", "text": request.question_text},
                ]},
            ],
        }
        if request.want_logprobs:
            body.update(logprobs=True, top_logprobs=request.top_k)
        try:
            resp = self._client.post(f"{self.url}/v1/chat/completions", json=body)
            resp.raise_for_status()
            choice = resp.json()["choices"][0]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ClientError(f"{self.url}: {exc}") from exc
        text = choice["message"]["content"] or ""
        content = (choice.get("logprobs") or {}).get("content") or []
        per_token = tuple(
            TokenLogprob(c["token"], float(c["logprob"]),
                         tuple((a["token"], float(a["logprob"])) for a in c.get("top_logprobs") or ()))
            for c in content
        )
        return BackendResponse(text, per_token)


def make_backend(spec: str) -> BackendClient:
    """``mock:<fixture_dir>`` or an http(s) base URL."""
    if spec.startswith("mock:"):
        return mock_backend(spec[len("mock:"):])
    if spec.startswith(("http://", "https://")):
        return OpenAICompatBackend(spec)
    raise ValueError(f"unrecognised backend {spec!r}; use mock:<dir> or an http(s) URL")
