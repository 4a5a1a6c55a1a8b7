from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class GrpoConfig:
    """GRPO hyperparameters.

    Defaults are the published large-model settings. The desk-scale toy run
    needs a far larger step size; use :meth:`toy` for that preset.

    ``grpo.config`` is a JSON object with any subset of these keys::

        {"group_size": 16, "clip_epsilon": 0.2, "kl_beta": 0.04,
         "inner_iterations": 1, "learning_rate": 5e-7, "seed": 0,
         "questions_per_step": 1, "sft_epochs": 0}
    """

    group_size: int = 16
    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    inner_iterations: int = 1
    learning_rate: float = 5e-7
    seed: int = 0
    questions_per_step: int = 1
    sft_epochs: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.inner_iterations < 1 or self.questions_per_step < 1:
            raise ValueError("inner_iterations and questions_per_step must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def toy(cls, **overrides) -> GrpoConfig:
        base = cls(learning_rate=0.05, questions_per_step=4, sft_epochs=30)
        return replace(base, **overrides)

    @classmethod
    def load(cls, path: str | Path, base: GrpoConfig | None = None) -> GrpoConfig:
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown GrpoConfig keys: {sorted(unknown)}")
        return replace(base or cls(), **data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    def to_dict(self) -> dict:
        return asdict(self)
