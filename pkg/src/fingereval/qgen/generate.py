"""Entity extraction and entity-level question generation."""
from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

from fingereval.dimensions import ALL_DIMENSIONS, Dimension
from fingereval.errors import ClientError, ExtractionEmpty, ParseError, SinkError
from fingereval.qgen.client import LlmClient, LlmRequest, call_with_retry
from fingereval.qgen.models import Entity, EntityQuestion, LlmExchange, QgenReport, UserPrompt
from fingereval.qgen.templates import IclExampleSet

log = logging.getLogger(__name__)

# One question per line: "Q<k>: [POS|NEG] text" with the marker optionally trailing instead.
QUESTION_PATTERN = re.compile(
    r"^\s*Q(?P<k>\d+)\s*:\s*(?:\[(?P<pre>POS|NEG)\]\s*)?(?P<text>\S.*?)\s*(?:\[(?P<post>POS|NEG)\])?\s*$"
)
_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "entity"


def _str_list(value, field: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"entity field {field!r} must be a list of strings")
    return tuple(v.strip() for v in value if v.strip())


def parse_entity_list(text: str, prompt: UserPrompt) -> list[Entity]:
    body = _FENCE.sub("", text.strip()).strip()
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(f"entity response is not JSON: {exc}") from exc
    if isinstance(data, dict) and "entities" in data:
        data = data["entities"]
    if not isinstance(data, list):
        raise ParseError("entity response must be a JSON array")
    entities = []
    lowered = prompt.text.lower()
    for item in data:
        if not isinstance(item, dict) or not isinstance(item.get("name"), str) or not item["name"].strip():
            raise ParseError(f"malformed entity entry: {item!r}")
        name = item["name"].strip()
        entities.append(Entity(
            name=name,
            attributes=_str_list(item.get("attributes"), "attributes"),
            actions=_str_list(item.get("actions"), "actions"),
            source_prompt=prompt.prompt_id,
            inferred=name.lower() not in lowered,
        ))
    return entities


def extract_entities(
    prompt: UserPrompt,
    client: LlmClient,
    icl: IclExampleSet,
    exchanges: list[LlmExchange] | None = None,
) -> list[Entity]:
    request = LlmRequest(icl.extraction_id(), icl.render_extraction(prompt.text))
    response, log_ = call_with_retry(client, request)
    if exchanges is not None:
        exchanges.extend(log_)
    entities = parse_entity_list(response.text, prompt)
    if not entities:
        log.warning("prompt %s: no entities extracted", prompt.prompt_id)
    return entities


def extract_questions(text: str) -> list[tuple[str, int, bool]]:
    """``(question, polarity, polarity_defaulted)`` for every line matching the question pattern."""
    out = []
    for line in text.splitlines():
        m = QUESTION_PATTERN.match(line)
        if not m:
            continue
        marker = m.group("pre") or m.group("post")
        if marker is None:
            out.append((m.group("text"), 1, True))
        else:
            out.append((m.group("text"), 1 if marker == "POS" else 0, False))
    return out


def generate_questions(
    entity: Entity,
    dimension: Dimension,
    prompt: UserPrompt,
    client: LlmClient,
    icl: IclExampleSet,
    video_id: str | None = None,
    exchanges: list[LlmExchange] | None = None,
) -> list[EntityQuestion]:
    dimension = Dimension.parse(dimension)
    request = LlmRequest(icl.question_id(dimension), icl.render_questions(dimension, prompt.text, entity))
    response, log_ = call_with_retry(client, request)
    if exchanges is not None:
        exchanges.extend(log_)
    found = extract_questions(response.text)
    if not found:
        raise ExtractionEmpty(f"{prompt.prompt_id}/{entity.name}/{dimension.value}: no question lines in response")
    vid = video_id if video_id is not None else prompt.prompt_id
    base = f"{prompt.prompt_id}/{_slug(entity.name)}/{dimension.value}"
    return [
        EntityQuestion(f"{base}/q{i + 1}", vid, dimension, entity, text, polarity, defaulted)
        for i, (text, polarity, defaulted) in enumerate(found)
    ]


class JsonlSink:
    """Serialised writer for questions.jsonl (plus entities.jsonl alongside)."""

    def __init__(self, path: str | Path, entities_path: str | Path | None = None):
        self.path = Path(path)
        self.entities_path = Path(entities_path) if entities_path else self.path.with_name("entities.jsonl")
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")
            self.entities_path.write_text("", encoding="utf-8")
        except OSError as exc:
            raise SinkError(f"cannot open sink {self.path}: {exc}") from exc

    def _append(self, path: Path, records: Iterable[dict]) -> None:
        lines = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)
        with self._lock:
            try:
                with open(path, "a", encoding="utf-8") as f:
                    f.write(lines)
            except OSError as exc:
                raise SinkError(f"write to {path} failed: {exc}") from exc

    def write_questions(self, questions: Iterable[EntityQuestion]) -> None:
        self._append(self.path, (q.to_record() for q in questions))

    def write_entities(self, entities: Iterable[Entity]) -> None:
        self._append(self.entities_path, (e.to_record() for e in entities))


def _dedupe(entities: list[Entity]) -> list[Entity]:
    seen: set[str] = set()
    out = []
    for e in entities:
        slug = _slug(e.name)
        if slug in seen:
            log.warning("duplicate entity %r in prompt %s dropped", e.name, e.source_prompt)
            continue
        seen.add(slug)
        out.append(e)
    return out


def _qgen_one(prompt, client, icl, dimensions, video_ids):
    failures, warnings = [], []
    try:
        entities = _dedupe(extract_entities(prompt, client, icl))
    except (ClientError, ParseError) as exc:
        return [], [], [{"prompt_id": prompt.prompt_id, "entity": None, "dimension": None,
                         "stage": "extract", "error": f"{type(exc).__name__}: {exc}"}], warnings
    if not entities:
        warnings.append(f"{prompt.prompt_id}: no entities extracted")
    questions = []
    for entity in entities:
        for dim in dimensions:
            try:
                qs = generate_questions(entity, dim, prompt, client, icl)
            except (ClientError, ExtractionEmpty, KeyError) as exc:
                failures.append({"prompt_id": prompt.prompt_id, "entity": entity.name, "dimension": dim.value,
                                 "stage": "questions", "error": f"{type(exc).__name__}: {exc}"})
                continue
            if not video_ids:
                questions.extend(qs)
                continue
            for vid in video_ids:
                questions.extend(
                    EntityQuestion(f"{vid}/{q.question_id}", vid, q.dimension, q.entity, q.text,
                                   q.polarity, q.polarity_defaulted)
                    for q in qs
                )
    return entities, questions, failures, warnings


def run_qgen_batch(
    prompts: Sequence[UserPrompt],
    client: LlmClient,
    icl: IclExampleSet,
    sink: JsonlSink,
    videos_by_prompt: dict[str, list[str]] | None = None,
    dimensions: Sequence[Dimension] = ALL_DIMENSIONS,
    parallelism: int = 1,
) -> QgenReport:
    """Generate questions for every prompt x entity x dimension cell.

    With ``videos_by_prompt`` each question is copied to every video made
    from its prompt, and the video id is prefixed to the question id so ids
    stay globally unique. Output order follows ``prompts`` regardless of
    ``parallelism``.
    """
    report = QgenReport(n_prompts=len(prompts))
    videos_by_prompt = videos_by_prompt or {}

    def work(p: UserPrompt):
        return _qgen_one(p, client, icl, dimensions, videos_by_prompt.get(p.prompt_id, []))

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(work, prompts))
    for entities, questions, failures, warnings in results:
        sink.write_entities(entities)
        sink.write_questions(questions)
        report.n_entities += len(entities)
        report.n_questions += len(questions)
        report.failures.extend(failures)
        report.warnings.extend(warnings)
    return report
