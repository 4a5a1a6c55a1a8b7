"""Parsing of ``<answer>...</answer><reason>...</reason>`` model outputs.

Every failure is encoded as a :class:`ViolationCode`; :func:`parse_tagged`
never raises on malformed input.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from fingereval.errors import NoAnswerTag

TAG_NAMES = ("answer", "reason")
_TAG_RE = re.compile(r"<(/?)(answer|reason)>")

DEFAULT_YES_WORDS: tuple[str, ...] = ("Yes",)
DEFAULT_NO_WORDS: tuple[str, ...] = ("No",)


class Answer(str, Enum):
    YES = "Yes"
    NO = "No"

    @classmethod
    def parse(cls, value: str | Answer) -> Answer:
        if isinstance(value, Answer):
            return value
        v = value.strip().lower()
        if v == "yes":
            return cls.YES
        if v == "no":
            return cls.NO
        raise ValueError(f"answer must be Yes or No, got {value!r}")


class Strictness(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class ViolationCode(str, Enum):
    # declaration order is the order violations are reported in
    MissingAnswerTag = "MissingAnswerTag"
    MissingReasonTag = "MissingReasonTag"
    DuplicateTag = "DuplicateTag"
    AnswerNotYesNo = "AnswerNotYesNo"
    EmptyReason = "EmptyReason"
    AnswerTokenOutsideAnswerTag = "AnswerTokenOutsideAnswerTag"


@dataclass(frozen=True)
class TaggedResponse:
    raw_text: str
    answer: Answer | None
    reason: str | None
    format_valid: bool
    violations: tuple[ViolationCode, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "answer": self.answer.value if self.answer else None,
            "reason": self.reason,
            "format_valid": self.format_valid,
            "violations": [v.value for v in self.violations],
        }


@dataclass(frozen=True)
class _Element:
    name: str
    start: int  # index of '<' of the opening tag
    content_start: int
    content_end: int
    end: int  # index just past the closing tag


def _scan(raw: str) -> tuple[dict[str, list[_Element]], dict[str, int]]:
    """Pair opening/closing tags left to right.

    Returns the well-formed elements per tag name and the number of tag
    markers (open or close) seen per name. A tag opened while another is
    still open abandons the outer one, so nested elements never count as
    well-formed for the outer name.
    """
    elements: dict[str, list[_Element]] = {n: [] for n in TAG_NAMES}
    opens: dict[str, int] = {n: 0 for n in TAG_NAMES}
    closes: dict[str, int] = {n: 0 for n in TAG_NAMES}
    current: re.Match | None = None
    for m in _TAG_RE.finditer(raw):
        is_close, name = m.group(1) == "/", m.group(2)
        if is_close:
            closes[name] += 1
            if current is not None and current.group(2) == name:
                elements[name].append(_Element(name, current.start(), current.end(), m.start(), m.end()))
            current = None
        else:
            opens[name] += 1
            current = m
    markers = {n: max(opens[n], closes[n]) for n in TAG_NAMES}
    return elements, markers


def _word_pattern(words: Iterable[str]) -> re.Pattern:
    alts = "|".join(re.escape(w) for w in sorted(set(words), key=len, reverse=True))
    return re.compile(rf"(?<!\w)(?:{alts})(?!\w)")


def parse_tagged(
    raw: str,
    strictness: Strictness | str = Strictness.STRICT,
    yes_words: Sequence[str] = DEFAULT_YES_WORDS,
    no_words: Sequence[str] = DEFAULT_NO_WORDS,
) -> TaggedResponse:
    strictness = Strictness(strictness)
    if set(yes_words) & set(no_words):
        raise ValueError("yes_words and no_words must be disjoint")
    elements, markers = _scan(raw)
    violations: set[ViolationCode] = set()

    answer_els, reason_els = elements["answer"], elements["reason"]
    if not answer_els:
        violations.add(ViolationCode.MissingAnswerTag)
    if not reason_els:
        violations.add(ViolationCode.MissingReasonTag)
    if len(answer_els) > 1 or len(reason_els) > 1 or markers["answer"] > 1 or markers["reason"] > 1:
        violations.add(ViolationCode.DuplicateTag)

    answer: Answer | None = None
    answer_el = answer_els[0] if len(answer_els) == 1 else None
    if answer_el is not None:
        content = raw[answer_el.content_start:answer_el.content_end].strip()
        if content in yes_words:
            answer = Answer.YES
        elif content in no_words:
            answer = Answer.NO
        else:
            violations.add(ViolationCode.AnswerNotYesNo)

    reason: str | None = None
    if len(reason_els) == 1:
        el = reason_els[0]
        reason = raw[el.content_start:el.content_end].strip()
        if not reason:
            violations.add(ViolationCode.EmptyReason)

    if strictness is Strictness.STRICT and answer_el is not None:
        pattern = _word_pattern([*yes_words, *no_words])
        # checked separately so text on either side of the tag cannot fuse into one word
        if pattern.search(raw[:answer_el.start]) or pattern.search(raw[answer_el.end:]):
            violations.add(ViolationCode.AnswerTokenOutsideAnswerTag)

    ordered = tuple(v for v in ViolationCode if v in violations)
    return TaggedResponse(raw, answer, reason, not ordered, ordered)


def render_tagged(answer: Answer | str, reason: str) -> str:
    return f"<answer>{Answer.parse(answer).value}</answer><reason>{reason}</reason>"


def token_offsets(tokens: Sequence[str]) -> list[tuple[str, tuple[int, int]]]:
    """Character spans for a token sequence that concatenates to the raw text."""
    out, pos = [], 0
    for tok in tokens:
        out.append((tok, (pos, pos + len(tok))))
        pos += len(tok)
    return out


def extract_answer_token_position(raw: str, offsets: Sequence[tuple[str, tuple[int, int]]]) -> int:
    """Index of the first token carrying non-whitespace answer content.

    A token qualifies when the part of it that overlaps the answer tag's
    content holds a non-whitespace character, so a token fused with the
    opening tag (``">Yes"``) is still located.
    """
    pos = 0
    for tok, (s, e) in offsets:
        if s != pos or raw[s:e] != tok:
            raise ValueError(f"token offsets do not cover the text contiguously at char {pos}")
        pos = e
    if pos != len(raw):
        raise ValueError("token offsets stop before the end of the text")

    elements, _ = _scan(raw)
    if not elements["answer"]:
        raise NoAnswerTag("response has no well-formed <answer> tag")
    el = elements["answer"][0]
    for i, (_, (s, e)) in enumerate(offsets):
        lo, hi = max(s, el.content_start), min(e, el.content_end)
        if lo < hi and raw[lo:hi].strip():
            return i
    raise NoAnswerTag("answer tag has no content tokens")
