"""End-to-end evaluation runs: backend calls, parsing, scoring, metrics."""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fingereval.dimensions import ALL_DIMENSIONS, Dimension
from fingereval.errors import DegenerateVariance, EmptyInput, FatalBackend, NoAnswerTokens
from fingereval.harness.backend import ANSWER_TEMPLATE_ID, BackendClient, BackendRequest, BackendResponse, answer_logits
from fingereval.harness.dataset import Dataset
from fingereval.metrics import PairedScores, PreferencePair, pairwise_tau_diff, plcc, srcc
from fingereval.parse import Strictness, TaggedResponse, parse_tagged
from fingereval.qgen.models import EntityQuestion
from fingereval.scoring import (
    AnswerDistribution,
    AnswerLogits,
    ScoreMode,
    ScoreTree,
    TokenSets,
    answer_accuracy,
    normalized_view,
    restricted_softmax,
    score_video,
    uniform_weights,
    validate_weights,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    token_sets: TokenSets = TokenSets()
    weights: dict = field(default_factory=lambda: {d.value: w for d, w in uniform_weights().items()})
    mode: ScoreMode = ScoreMode.NORMALIZED
    strictness: Strictness = Strictness.STRICT
    want_logprobs: bool = True
    top_k: int = 20
    system_template_id: str = ANSWER_TEMPLATE_ID
    # forwarded to the backend, recorded for provenance only
    backend_params: dict = field(default_factory=lambda: {"fps": 2, "max_resolution": [448, 448]})

    def __post_init__(self):
        validate_weights(self.weights)

    def snapshot(self) -> dict:
        return {
            "token_sets": self.token_sets.to_dict(),
            "weights": {Dimension.parse(k).value: float(v) for k, v in sorted(self.weights.items())},
            "mode": ScoreMode.parse(self.mode).value,
            "strictness": Strictness(self.strictness).value,
            "want_logprobs": self.want_logprobs,
            "top_k": self.top_k,
            "system_template_id": self.system_template_id,
            "backend_params": self.backend_params,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.snapshot(), sort_keys=True).encode()).hexdigest()[:16]


class ResponseCache:
    """On-disk backend responses, one JSON file per (backend, question, config) key."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(backend_id: str, question_id: str, config_hash: str) -> str:
        return hashlib.sha256(f"{backend_id}\0{question_id}\0{config_hash}".encode()).hexdigest()

    def get(self, key: str) -> BackendResponse | None:
        path = self.root / f"{key}.json"
        if not path.exists():
            return None
        return BackendResponse.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, key: str, response: BackendResponse) -> None:
        path = self.root / f"{key}.json"
        tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
        with self._lock:
            tmp.write_text(json.dumps(response.to_dict(), sort_keys=True), encoding="utf-8")
            tmp.replace(path)


@dataclass
class QuestionResult:
    question: EntityQuestion
    response: TaggedResponse
    logits: AnswerLogits | None
    distribution: AnswerDistribution | None

    def to_dict(self) -> dict:
        q = self.question
        return {
            "question_id": q.question_id,
            "video_id": q.video_id,
            "dimension": q.dimension.value,
            "polarity": q.polarity,
            **self.response.to_dict(),
            "p_yes": self.distribution.p_yes if self.distribution else None,
            "p_no": self.distribution.p_no if self.distribution else None,
            "coverage": self.distribution.coverage if self.distribution else 0,
        }


@dataclass
class EvalRun:
    run_id: str
    config: dict
    scores: dict[str, ScoreTree]
    results: dict[str, QuestionResult]
    metrics: dict
    failures: list[dict]
    n_questions: int

    @property
    def conserved(self) -> bool:
        return self.n_questions == len(self.results) + len(self.failures)


def _query_one(q: EntityQuestion, dataset: Dataset, backend: BackendClient, cfg: EvalConfig,
               cache: ResponseCache | None, cfg_hash: str):
    key = ResponseCache.key(backend.backend_id, q.question_id, cfg_hash) if cache else None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return q, hit, None
    req = BackendRequest(q.question_id, dataset.videos[q.video_id].media_ref, q.text,
                         cfg.system_template_id, cfg.want_logprobs, cfg.top_k)
    try:
        resp = backend.query(req)
    except Exception as exc:  # per-item failures are recorded, never fatal on their own
        return q, None, f"{type(exc).__name__}: {exc}"
    if cache is not None:
        cache.put(key, resp)
    return q, resp, None


def _build_result(q: EntityQuestion, resp: BackendResponse, cfg: EvalConfig,
                  logits: AnswerLogits | None = None) -> QuestionResult:
    parsed = parse_tagged(resp.raw_text, cfg.strictness)
    if logits is None and cfg.want_logprobs:
        logits = answer_logits(resp, q.question_id)
    dist = None
    if logits is not None:
        try:
            dist = restricted_softmax(logits, cfg.token_sets)
        except NoAnswerTokens:
            logits = None
    return QuestionResult(q, parsed, logits, dist)


def _truth_tree(questions: list[EntityQuestion], dataset: Dataset, cfg: EvalConfig) -> ScoreTree | None:
    """Score tree implied by the human answers (hard scoring on ground truth)."""
    pairs = []
    for q in questions:
        t = dataset.truths.get(q.question_id)
        if t is None:
            return None
        pairs.append((q, TaggedResponse(t.answer.value, t.answer, t.reason or "annotated", True, ())))
    if not pairs:
        return None
    return score_video(pairs, cfg.token_sets, cfg.weights, ScoreMode.NORMALIZED, prob_mode=False)


def _corr(pred: dict[str, float], ref: dict[str, float], flags: list[str], label: str) -> dict:
    ids = sorted(set(pred) & set(ref))
    out = {"srcc": None, "plcc": None, "n": len(ids)}
    if len(ids) < 2:
        flags.append(f"{label}: fewer than 2 videos")
        return out
    paired = PairedScores(tuple(ids), tuple(pred[i] for i in ids), tuple(ref[i] for i in ids))
    for name, fn in (("srcc", srcc), ("plcc", plcc)):
        try:
            out[name] = fn(paired)
        except (DegenerateVariance, EmptyInput) as exc:
            flags.append(f"{label} {name}: {exc}")
    return out


def compute_metrics(dataset: Dataset, results: dict[str, QuestionResult], scores: dict[str, ScoreTree],
                    cfg: EvalConfig) -> dict:
    flags: list[str] = []
    metrics: dict = {"dimensions": {}, "overall": {}, "degenerate_flags": flags}
    norm = {vid: normalized_view(t) for vid, t in scores.items()}

    truth_trees: dict[str, ScoreTree] = {}
    if dataset.truths:
        answered: dict[str, list[EntityQuestion]] = {}
        for r in results.values():
            answered.setdefault(r.question.video_id, []).append(r.question)
        for vid, qs in answered.items():
            tree = _truth_tree(qs, dataset, cfg)
            if tree is not None:
                truth_trees[vid] = tree

    for d in ALL_DIMENSIONS:
        row: dict = {"acc": None, "n_questions": 0}
        preds = {qid: r.response for qid, r in results.items()
                 if r.question.dimension is d and qid in dataset.truths}
        if preds:
            row["acc"] = answer_accuracy(preds, [dataset.truths[q] for q in sorted(preds)])
            row["n_questions"] = len(preds)
        pred = {v: t.dim_scores[d] for v, t in norm.items() if d in t.dim_scores}
        ref = {v: t.dim_scores[d] for v, t in truth_trees.items() if d in t.dim_scores}
        row.update(_corr(pred, ref, flags, d.value) if truth_trees else {"srcc": None, "plcc": None, "n": 0})
        metrics["dimensions"][d.value] = row

    overall: dict = {"acc": None, "n_questions": 0}
    preds = {qid: r.response for qid, r in results.items() if qid in dataset.truths}
    if preds:
        overall["acc"] = answer_accuracy(preds, [dataset.truths[q] for q in sorted(preds)])
        overall["n_questions"] = len(preds)
    pred_overall = {v: t.overall for v, t in norm.items()}
    if dataset.references:
        overall["reference"] = "mos"
        overall.update(_corr(pred_overall, dataset.references, flags, "overall"))
    elif truth_trees:
        overall["reference"] = "annotations"
        overall.update(_corr(pred_overall, {v: t.overall for v, t in truth_trees.items()}, flags, "overall"))
    metrics["overall"] = overall

    if dataset.preferences:
        pairs = [PreferencePair(p.pair_id, pred_overall[p.video_a], pred_overall[p.video_b], p.label)
                 for p in dataset.preferences if p.video_a in pred_overall and p.video_b in pred_overall]
        if pairs:
            res = pairwise_tau_diff(pairs)
            metrics["pairwise"] = asdict(res)
            if res.diff is None:
                flags.append("pairwise diff: every human label is a tie")
    return metrics


def run_eval(
    dataset: Dataset,
    backend: BackendClient,
    cfg: EvalConfig = EvalConfig(),
    cache: ResponseCache | None = None,
    parallelism: int = 1,
) -> EvalRun:
    """Answer, parse and score every question in ``dataset``.

    Per-question backend failures land in ``failures``; a video whose
    answers lack usable log-probs is scored in hard (w/o prob) mode.
    """
    cfg_hash = cfg.config_hash()
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        fetched = list(pool.map(lambda q: _query_one(q, dataset, backend, cfg, cache, cfg_hash), dataset.questions))

    results: dict[str, QuestionResult] = {}
    failures: list[dict] = []
    for q, resp, err in fetched:
        if err is not None:
            failures.append({"question_id": q.question_id, "video_id": q.video_id, "stage": "backend", "error": err})
        else:
            results[q.question_id] = _build_result(q, resp, cfg)
    if dataset.questions and not results:
        raise FatalBackend(f"backend {backend.backend_id} failed for all {len(dataset.questions)} questions")
    return _assemble(dataset, results, failures, cfg, backend.backend_id)


def score_records(dataset: Dataset, records: dict[str, dict], cfg: EvalConfig = EvalConfig(),
                  source_id: str = "offline") -> EvalRun:
    """Score recorded responses without a backend.

    Each record holds ``raw_text`` plus either ``answer_logits``
    (``[{token, value, kind}]`` at the answer position) or a backend-style
    ``per_token`` list. Questions without a record become failures.
    """
    results: dict[str, QuestionResult] = {}
    failures: list[dict] = []
    for q in dataset.questions:
        rec = records.get(q.question_id)
        if rec is None:
            failures.append({"question_id": q.question_id, "video_id": q.video_id, "stage": "input",
                             "error": "no recorded response"})
            continue
        logits = None
        if rec.get("answer_logits") and cfg.want_logprobs:
            logits = AnswerLogits.from_records(rec["answer_logits"], q.question_id)
        results[q.question_id] = _build_result(q, BackendResponse.from_dict(rec), cfg, logits)
    return _assemble(dataset, results, failures, cfg, source_id)


def _assemble(dataset: Dataset, results: dict[str, QuestionResult], failures: list[dict],
              cfg: EvalConfig, backend_id: str) -> EvalRun:
    by_video: dict[str, list[QuestionResult]] = {}
    for r in results.values():
        by_video.setdefault(r.question.video_id, []).append(r)
    scores: dict[str, ScoreTree] = {}
    for vid in sorted(by_video):
        rs = sorted(by_video[vid], key=lambda r: r.question.question_id)
        prob_mode = all(r.logits is not None for r in rs)
        pairs = [(r.question, r.logits if prob_mode else r.response) for r in rs]
        try:
            scores[vid] = score_video(pairs, cfg.token_sets, cfg.weights, cfg.mode, prob_mode)
        except ValueError as exc:
            # keeps the conservation count honest: these questions move to failures
            for r in rs:
                del results[r.question.question_id]
                failures.append({"question_id": r.question.question_id, "video_id": vid,
                                 "stage": "scoring", "error": f"{type(exc).__name__}: {exc}"})

    failures.sort(key=lambda f: f["question_id"])
    metrics = compute_metrics(dataset, results, scores, cfg)
    snapshot = cfg.snapshot()
    snapshot["backend_id"] = backend_id
    run_id = hashlib.sha256(json.dumps(
        {"config": snapshot, "questions": sorted(q.question_id for q in dataset.questions)}, sort_keys=True
    ).encode()).hexdigest()[:12]
    return EvalRun(run_id, snapshot, scores, dict(sorted(results.items())), metrics, failures, len(dataset.questions))
