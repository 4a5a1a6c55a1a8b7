"""Hierarchical scoring: answer-token probabilities -> entity -> dimension -> overall."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from fingereval.dimensions import ALL_DIMENSIONS, Dimension
from fingereval.errors import (
    EmptyDimension,
    IdMismatch,
    MissingDimension,
    NoAnswerTokens,
    WeightSumInvalid,
)
from fingereval.parse import Answer, TaggedResponse

# "Yes" and its tokenizer variants; the quote-prefixed form is a common BPE merge.
DEFAULT_YES_TOKENS = ("Yes", "yes", "YES", '"Yes', " Yes")
DEFAULT_NO_TOKENS = ("No", "no", "NO", '"No', " No")

WEIGHT_SUM_TOL = 1e-9


class ScoreMode(str, Enum):
    PAPER_LITERAL = "paper_literal"
    NORMALIZED = "normalized"

    @classmethod
    def parse(cls, value: str | ScoreMode) -> ScoreMode:
        return value if isinstance(value, ScoreMode) else cls(value.replace("-", "_"))


class LogitKind(str, Enum):
    RAW_LOGIT = "raw_logit"
    FULL_VOCAB_LOGPROB = "full_vocab_logprob"


@dataclass(frozen=True)
class TokenSets:
    yes_tokens: tuple[str, ...] = DEFAULT_YES_TOKENS
    no_tokens: tuple[str, ...] = DEFAULT_NO_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "yes_tokens", tuple(dict.fromkeys(self.yes_tokens)))
        object.__setattr__(self, "no_tokens", tuple(dict.fromkeys(self.no_tokens)))
        if not self.yes_tokens or not self.no_tokens:
            raise ValueError("token sets must be non-empty")
        overlap = set(self.yes_tokens) & set(self.no_tokens)
        if overlap:
            raise ValueError(f"token sets overlap: {sorted(overlap)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> TokenSets:
        return cls(tuple(d["yes"]), tuple(d["no"]))

    def to_dict(self) -> dict:
        return {"yes": list(self.yes_tokens), "no": list(self.no_tokens)}


@dataclass(frozen=True)
class AnswerLogits:
    entries: tuple[tuple[str, float], ...]
    kind: LogitKind = LogitKind.RAW_LOGIT
    question_id: str | None = None
    token_index: int | None = None

    def __post_init__(self):
        tokens = [t for t, _ in self.entries]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate token strings in answer logits")

    @classmethod
    def from_records(cls, records: Iterable[Mapping], question_id: str | None = None) -> AnswerLogits:
        """Build from ``[{token, value, kind}, ...]`` records (the responses.jsonl layout)."""
        records = list(records)
        kinds = {r.get("kind", LogitKind.RAW_LOGIT.value) for r in records}
        if len(kinds) > 1:
            raise ValueError(f"mixed logit kinds: {sorted(kinds)}")
        kind = LogitKind(kinds.pop()) if kinds else LogitKind.RAW_LOGIT
        return cls(tuple((r["token"], float(r["value"])) for r in records), kind, question_id)


@dataclass(frozen=True)
class AnswerDistribution:
    p_yes: float
    p_no: float
    coverage: int

    @classmethod
    def from_answer(cls, answer: Answer) -> AnswerDistribution:
        return cls(1.0, 0.0, 1) if answer is Answer.YES else cls(0.0, 1.0, 1)


@dataclass(frozen=True)
class GroundTruth:
    question_id: str
    answer: Answer
    reason: str | None = None


@dataclass(frozen=True)
class EntityQuestionRef:
    """The slice of a generated question that scoring needs."""

    question_id: str
    dimension: Dimension
    polarity: int


@dataclass
class ScoreTree:
    entity_scores: dict[str, float]
    dim_scores: dict[Dimension, float]
    dim_counts: dict[Dimension, int]
    overall: float
    weights: dict[Dimension, float]
    mode: ScoreMode
    partial: bool = False
    prob_mode: bool = field(default=True, compare=False)

    def to_record(self, video_id: str) -> dict:
        """Flattened scores.jsonl row."""
        row = {
            "video_id": video_id,
            "mode": self.mode.value,
            "prob_mode": self.prob_mode,
            "overall": self.overall,
            "partial": self.partial,
            "weights": {d.value: w for d, w in self.weights.items()},
        }
        for d in ALL_DIMENSIONS:
            row[d.value] = self.dim_scores.get(d)
            row[f"{d.value}_count"] = self.dim_counts.get(d, 0)
        row["entity_scores"] = dict(sorted(self.entity_scores.items()))
        return row


def restricted_softmax(logits: AnswerLogits, sets: TokenSets = TokenSets()) -> AnswerDistribution:
    """Softmax restricted to the Yes/No token sets, summed per answer.

    Only set members actually present in ``logits`` take part; absent
    variants get zero mass. Log-probabilities over the full vocabulary
    differ from raw logits by a constant, so both kinds go through the
    same computation.
    """
    yes = set(sets.yes_tokens)
    no = set(sets.no_tokens)
    found = [(tok, v) for tok, v in logits.entries if tok in yes or tok in no]
    if not found:
        raise NoAnswerTokens(f"no Yes/No token in logits for question {logits.question_id!r}")
    values = [v for _, v in found]
    if not all(math.isfinite(v) or v == -math.inf for v in values):
        raise ValueError("logit values must be finite or -inf")
    top = max(values)
    if top == -math.inf:
        raise NoAnswerTokens("every Yes/No token has zero probability")
    mass_yes = math.fsum(math.exp(v - top) for tok, v in found if tok in yes)
    mass_no = math.fsum(math.exp(v - top) for tok, v in found if tok in no)
    total = mass_yes + mass_no
    p_yes = mass_yes / total
    return AnswerDistribution(p_yes, 1.0 - p_yes, len(found))


def entity_score(dist: AnswerDistribution, polarity: int) -> float:
    if polarity == 1:
        return dist.p_yes
    if polarity == 0:
        return dist.p_no
    raise ValueError(f"polarity must be 0 or 1, got {polarity!r}")


def hard_entity_score(response: TaggedResponse, polarity: int) -> float:
    """1.0 when the parsed answer points towards higher quality, else 0.0."""
    if not response.format_valid or response.answer is None:
        return 0.0
    good = Answer.YES if polarity == 1 else Answer.NO
    return 1.0 if response.answer is good else 0.0


def dimension_score(entity_scores: Sequence[float], mode: ScoreMode | str = ScoreMode.NORMALIZED) -> float:
    mode = ScoreMode.parse(mode)
    if len(entity_scores) == 0:
        raise EmptyDimension("dimension has no scored questions")
    n = len(entity_scores)
    mean = math.fsum(entity_scores) / n
    if mode is ScoreMode.PAPER_LITERAL:
        # scaled back from the mean so that normalized * count == literal holds bit for bit;
        # differs from the correctly rounded sum by at most an ulp
        return mean * n
    return mean


def uniform_weights() -> dict[Dimension, float]:
    return {d: 1.0 / len(ALL_DIMENSIONS) for d in ALL_DIMENSIONS}


def validate_weights(weights: Mapping[Dimension | str, float]) -> dict[Dimension, float]:
    parsed = {Dimension.parse(k): float(v) for k, v in weights.items()}
    if any(w < 0 or not math.isfinite(w) for w in parsed.values()):
        raise WeightSumInvalid("weights must be finite and non-negative")
    total = math.fsum(parsed.values())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumInvalid(f"weights sum to {total!r}, expected 1")
    return parsed


def overall_score(
    dim_scores: Mapping[Dimension, float],
    weights: Mapping[Dimension | str, float] | None = None,
    mode: ScoreMode | str = ScoreMode.NORMALIZED,
) -> tuple[float, bool]:
    """Weighted sum of dimension scores. Returns ``(overall, partial)``.

    In normalized mode a missing dimension has its weight dropped and the
    remaining weights rescaled, flagging the result as partial. Paper-literal
    mode requires all five dimensions.
    """
    mode = ScoreMode.parse(mode)
    w = validate_weights(weights if weights is not None else uniform_weights())
    present = [d for d in ALL_DIMENSIONS if d in dim_scores]
    unweighted = [d for d in present if d not in w]
    if unweighted:
        raise WeightSumInvalid(f"no weight for dimension(s) {[d.value for d in unweighted]}")
    missing = [d for d in ALL_DIMENSIONS if d not in dim_scores and w.get(d, 0.0) > 0.0]
    if not present:
        raise MissingDimension("no dimension scores to aggregate")
    if not missing:
        return math.fsum(w[d] * dim_scores[d] for d in present), False
    if mode is ScoreMode.PAPER_LITERAL:
        raise MissingDimension(f"missing dimension(s) {[d.value for d in missing]}")
    mass = math.fsum(w[d] for d in present)
    if mass <= 0.0:
        raise WeightSumInvalid("present dimensions carry zero weight")
    return math.fsum(w[d] * dim_scores[d] for d in present) / mass, True


def score_video(
    responses: Sequence[tuple[EntityQuestionRef, AnswerLogits | TaggedResponse]],
    sets: TokenSets = TokenSets(),
    weights: Mapping[Dimension | str, float] | None = None,
    mode: ScoreMode | str = ScoreMode.NORMALIZED,
    prob_mode: bool = True,
) -> ScoreTree:
    """Score one video from its per-question answers.

    With ``prob_mode`` every answer must be :class:`AnswerLogits`; otherwise
    every answer must be a parsed :class:`TaggedResponse` and entity scores
    are hard 0/1.
    """
    mode = ScoreMode.parse(mode)
    w = validate_weights(weights if weights is not None else uniform_weights())
    entity: dict[str, float] = {}
    per_dim: dict[Dimension, list[float]] = defaultdict(list)
    for q, ans in responses:
        try:
            if prob_mode:
                if not isinstance(ans, AnswerLogits):
                    raise TypeError("prob_mode needs AnswerLogits")
                s = entity_score(restricted_softmax(ans, sets), q.polarity)
            else:
                if not isinstance(ans, TaggedResponse):
                    raise TypeError("hard mode needs a TaggedResponse")
                s = hard_entity_score(ans, q.polarity)
        except (ValueError, TypeError) as exc:
            raise type(exc)(f"question {q.question_id}: {exc}") from exc
        if q.question_id in entity:
            raise ValueError(f"question {q.question_id} scored twice")
        entity[q.question_id] = s
        per_dim[q.dimension].append(s)

    # sorted inputs keep the float sums independent of arrival order
    dim_scores = {d: dimension_score(sorted(per_dim[d]), mode) for d in ALL_DIMENSIONS if per_dim.get(d)}
    dim_counts = {d: len(per_dim[d]) for d in dim_scores}
    overall, partial = overall_score(dim_scores, w, mode)
    return ScoreTree(entity, dim_scores, dim_counts, overall, w, mode, partial, prob_mode)


def normalized_view(tree: ScoreTree) -> ScoreTree:
    """The same tree with per-question-mean dimension scores, for cross-video comparison."""
    if tree.mode is ScoreMode.NORMALIZED:
        return tree
    dims = {d: s / tree.dim_counts[d] for d, s in tree.dim_scores.items()}
    overall, partial = overall_score(dims, tree.weights, ScoreMode.NORMALIZED)
    return ScoreTree(dict(tree.entity_scores), dims, dict(tree.dim_counts), overall, dict(tree.weights),
                     ScoreMode.NORMALIZED, partial, tree.prob_mode)


def answer_accuracy(predictions: Mapping[str, TaggedResponse], truths: Sequence[GroundTruth]) -> float:
    """Exact-match answer accuracy; invalid-format predictions count as wrong."""
    truth_ids = [t.question_id for t in truths]
    if len(set(truth_ids)) != len(truth_ids) or set(truth_ids) != set(predictions):
        raise IdMismatch("predictions and ground truths cover different question ids")
    if not truths:
        raise IdMismatch("no ground truths")
    hits = sum(
        1 for t in truths
        if predictions[t.question_id].format_valid and predictions[t.question_id].answer is t.answer
    )
    return hits / len(truths)
