"""Loading and cross-checking an evaluation dataset directory.

Layout::

    videos.jsonl        {video_id, prompt_id, generator_name, media_ref}
    questions.jsonl     {question_id, video_id, dimension, entity, text, polarity, ...}
    annotations.jsonl   {question_id, answer, reason?}            (optional)
    references.jsonl    {video_id, mos}                           (optional)
    preferences.jsonl   {pair_id, video_a, video_b, label}        (optional)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from fingereval.dimensions import Dimension
from fingereval.errors import DanglingReference, DuplicateId, SchemaError
from fingereval.metrics import PreferenceLabel
from fingereval.parse import Answer
from fingereval.qgen.models import Entity, EntityQuestion
from fingereval.scoring import GroundTruth

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    prompt_id: str
    media_ref: str
    generator_name: str = ""


@dataclass(frozen=True)
class PreferenceRecord:
    pair_id: str
    video_a: str
    video_b: str
    label: PreferenceLabel


@dataclass
class Dataset:
    videos: dict[str, VideoRecord]
    questions: list[EntityQuestion]
    truths: dict[str, GroundTruth] = field(default_factory=dict)
    references: dict[str, float] = field(default_factory=dict)
    preferences: list[PreferenceRecord] = field(default_factory=list)
    root: Path | None = None

    def questions_by_video(self) -> dict[str, list[EntityQuestion]]:
        out: dict[str, list[EntityQuestion]] = {v: [] for v in self.videos}
        for q in self.questions:
            out[q.video_id].append(q)
        return out


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``; blank lines are skipped."""
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{n}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise SchemaError(f"{path}:{n}: expected a JSON object")
            version = rec.get("schema_version", SCHEMA_VERSION)
            if version != SCHEMA_VERSION:
                raise SchemaError(f"{path}:{n}: unsupported schema_version {version!r}")
            yield n, rec


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({"schema_version": SCHEMA_VERSION, **r}, ensure_ascii=False, sort_keys=True) + "\n")


def _require(rec: dict, keys: tuple[str, ...], where: str) -> None:
    missing = [k for k in keys if k not in rec or rec[k] is None]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {missing}")


class _Diagnostics:
    def __init__(self):
        self.items: list[tuple[type[Exception], str]] = []

    def add(self, kind: type[Exception], msg: str) -> None:
        self.items.append((kind, msg))

    def raise_if_any(self) -> None:
        if self.items:
            kind = self.items[0][0]
            raise kind("\n".join(m for _, m in self.items))


def parse_question(rec: dict, where: str = "question") -> EntityQuestion:
    _require(rec, ("question_id", "video_id", "dimension", "text", "polarity"), where)
    try:
        return EntityQuestion(
            question_id=str(rec["question_id"]),
            video_id=str(rec["video_id"]),
            dimension=Dimension.parse(rec["dimension"]),
            entity=Entity(str(rec.get("entity") or "unknown"), source_prompt=str(rec.get("prompt_id", ""))),
            text=str(rec["text"]),
            polarity=int(rec["polarity"]),
            polarity_defaulted=bool(rec.get("polarity_defaulted", False)),
        )
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def load_questions(path: str | Path) -> list[EntityQuestion]:
    return [parse_question(rec, f"{path}:{n}") for n, rec in read_jsonl(path)]


def ingest(root: str | Path) -> Dataset:
    """Load a dataset directory, rejecting duplicate ids and dangling references."""
    root = Path(root)
    diag = _Diagnostics()
    videos_path = root / "videos.jsonl"
    questions_path = root / "questions.jsonl"
    for p in (videos_path, questions_path):
        if not p.exists():
            raise SchemaError(f"{p} not found")

    videos: dict[str, VideoRecord] = {}
    for n, rec in read_jsonl(videos_path):
        where = f"{videos_path.name}:{n}"
        _require(rec, ("video_id", "prompt_id", "media_ref"), where)
        if not str(rec["media_ref"]).strip():
            raise SchemaError(f"{where}: media_ref is empty")
        vid = str(rec["video_id"])
        if vid in videos:
            diag.add(DuplicateId, f"{where}: duplicate video_id {vid!r}")
            continue
        videos[vid] = VideoRecord(vid, str(rec["prompt_id"]), str(rec["media_ref"]), str(rec.get("generator_name", "")))

    questions: list[EntityQuestion] = []
    seen_q: set[str] = set()
    for n, rec in read_jsonl(questions_path):
        where = f"{questions_path.name}:{n}"
        q = parse_question(rec, where)
        if q.question_id in seen_q:
            diag.add(DuplicateId, f"{where}: duplicate question_id {q.question_id!r}")
            continue
        if q.video_id not in videos:
            diag.add(DanglingReference, f"{where}: question {q.question_id!r} references unknown video_id {q.video_id!r}")
            continue
        seen_q.add(q.question_id)
        questions.append(q)

    truths: dict[str, GroundTruth] = {}
    ann_path = root / "annotations.jsonl"
    if ann_path.exists():
        for n, rec in read_jsonl(ann_path):
            where = f"{ann_path.name}:{n}"
            _require(rec, ("question_id", "answer"), where)
            qid = str(rec["question_id"])
            if qid not in seen_q:
                diag.add(DanglingReference, f"{where}: annotation for unknown question_id {qid!r}")
                continue
            if qid in truths:
                diag.add(DuplicateId, f"{where}: duplicate annotation for {qid!r}")
                continue
            try:
                truths[qid] = GroundTruth(qid, Answer.parse(rec["answer"]), rec.get("reason"))
            except ValueError as exc:
                raise SchemaError(f"{where}: {exc}") from exc

    references: dict[str, float] = {}
    ref_path = root / "references.jsonl"
    if ref_path.exists():
        for n, rec in read_jsonl(ref_path):
            where = f"{ref_path.name}:{n}"
            _require(rec, ("video_id", "mos"), where)
            vid = str(rec["video_id"])
            if vid not in videos:
                diag.add(DanglingReference, f"{where}: reference for unknown video_id {vid!r}")
            elif vid in references:
                diag.add(DuplicateId, f"{where}: duplicate reference for {vid!r}")
            else:
                references[vid] = float(rec["mos"])

    preferences: list[PreferenceRecord] = []
    pref_path = root / "preferences.jsonl"
    if pref_path.exists():
        seen_p: set[str] = set()
        for n, rec in read_jsonl(pref_path):
            where = f"{pref_path.name}:{n}"
            _require(rec, ("pair_id", "video_a", "video_b", "label"), where)
            pid = str(rec["pair_id"])
            if pid in seen_p:
                diag.add(DuplicateId, f"{where}: duplicate pair_id {pid!r}")
                continue
            unknown = [v for v in (rec["video_a"], rec["video_b"]) if v not in videos]
            if unknown:
                diag.add(DanglingReference, f"{where}: pair {pid!r} references unknown video(s) {unknown}")
                continue
            seen_p.add(pid)
            try:
                label = PreferenceLabel(rec["label"])
            except ValueError as exc:
                raise SchemaError(f"{where}: {exc}") from exc
            preferences.append(PreferenceRecord(pid, rec["video_a"], rec["video_b"], label))

    diag.raise_if_any()
    return Dataset(videos, questions, truths, references, preferences, root)


def bundled_corpus() -> Path:
    """Directory of the 5-video synthetic corpus shipped with the package."""
    from importlib.resources import files

    return Path(str(files("fingereval") / "data" / "minicorpus"))
