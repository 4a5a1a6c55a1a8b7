from __future__ import annotations

from dataclasses import dataclass

from fingereval.parse import Strictness, TaggedResponse, parse_tagged
from fingereval.scoring import GroundTruth


@dataclass(frozen=True)
class Reward:
    accuracy: float
    format: float

    @property
    def total(self) -> float:
        return self.accuracy + self.format


def reward_accuracy(response: TaggedResponse, truth: GroundTruth) -> float:
    # an output without a valid format has no answer to credit
    if not response.format_valid or response.answer is None:
        return 0.0
    return 1.0 if response.answer is truth.answer else 0.0


def reward_format(response: TaggedResponse) -> float:
    """1.0 iff the output passes the strict tag-format check."""
    if response.format_valid and not response.violations:
        strict = parse_tagged(response.raw_text, Strictness.STRICT)
        return 1.0 if strict.format_valid else 0.0
    return 0.0


def compute_reward(raw: str, truth: GroundTruth) -> tuple[TaggedResponse, Reward]:
    parsed = parse_tagged(raw, Strictness.STRICT)
    return parsed, Reward(reward_accuracy(parsed, truth), reward_format(parsed))
