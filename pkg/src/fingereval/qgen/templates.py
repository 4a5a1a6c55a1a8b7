from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from fingereval.dimensions import ALL_DIMENSIONS, Dimension

DEFAULT_VERSION = "v1"


@dataclass(frozen=True)
class IclExampleSet:
    """Versioned prompt templates with their in-context examples.

    A template set is a directory holding ``entity_extraction.txt`` and
    ``questions/<dimension>.txt``; placeholders use ``$name`` syntax.
    """

    version: str
    extraction: str
    questions: dict[Dimension, str]

    @classmethod
    def load(cls, version: str = DEFAULT_VERSION) -> IclExampleSet:
        root = resources.files("fingereval.qgen") / "templates" / version
        return cls._read(version, lambda rel: (root / rel).read_text(encoding="utf-8"))

    @classmethod
    def from_dir(cls, path: str | Path) -> IclExampleSet:
        path = Path(path)
        return cls._read(path.name, lambda rel: (path / rel).read_text(encoding="utf-8"))

    @classmethod
    def _read(cls, version, read) -> IclExampleSet:
        questions = {}
        for d in ALL_DIMENSIONS:
            try:
                questions[d] = read(f"questions/{d.value}.txt")
            except FileNotFoundError:
                pass
        return cls(version, read("entity_extraction.txt"), questions)

    def __post_init__(self):
        if not self.extraction.strip():
            raise ValueError("extraction template is empty")

    def extraction_id(self) -> str:
        return f"{self.version}/entity_extraction"

    def question_id(self, dimension: Dimension) -> str:
        return f"{self.version}/questions/{dimension.value}"

    def render_extraction(self, prompt_text: str) -> str:
        return Template(self.extraction).substitute(prompt=prompt_text)

    def render_questions(self, dimension: Dimension, prompt_text: str, entity) -> str:
        if dimension not in self.questions:
            raise KeyError(f"template set {self.version!r} has no examples for {dimension.value}")
        return Template(self.questions[dimension]).substitute(
            prompt=prompt_text,
            entity=entity.name,
            attributes=", ".join(entity.attributes) or "none",
            actions=", ".join(entity.actions) or "none",
        )
