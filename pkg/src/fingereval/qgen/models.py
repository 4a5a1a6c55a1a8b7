from __future__ import annotations

from dataclasses import dataclass, field

from fingereval.dimensions import Dimension

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class UserPrompt:
    prompt_id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"prompt {self.prompt_id!r} is empty")


@dataclass(frozen=True)
class Entity:
    name: str
    attributes: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    source_prompt: str = ""
    # name does not occur verbatim in the prompt text
    inferred: bool = False

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("entity name must be non-empty")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "prompt_id": self.source_prompt,
            "name": self.name,
            "attributes": list(self.attributes),
            "actions": list(self.actions),
            "inferred": self.inferred,
        }


@dataclass(frozen=True)
class EntityQuestion:
    question_id: str
    video_id: str
    dimension: Dimension
    entity: Entity
    text: str
    polarity: int
    polarity_defaulted: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("question text must be non-empty")
        if self.polarity not in (0, 1):
            raise ValueError(f"polarity must be 0 or 1, got {self.polarity!r}")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "question_id": self.question_id,
            "video_id": self.video_id,
            "prompt_id": self.entity.source_prompt,
            "dimension": self.dimension.value,
            "entity": self.entity.name,
            "text": self.text,
            "polarity": self.polarity,
            "polarity_defaulted": self.polarity_defaulted,
        }


@dataclass(frozen=True)
class LlmExchange:
    request_template_id: str
    rendered_prompt: str
    raw_response: str
    latency_ms: float
    attempt: int
    error: str | None = None


@dataclass
class QgenReport:
    n_prompts: int = 0
    n_entities: int = 0
    n_questions: int = 0
    failures: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_prompts": self.n_prompts,
            "n_entities": self.n_entities,
            "n_questions": self.n_questions,
            "failures": self.failures,
            "warnings": self.warnings,
        }
