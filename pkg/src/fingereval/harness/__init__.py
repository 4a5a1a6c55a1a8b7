from fingereval.harness.backend import (
    BackendClient,
    BackendRequest,
    BackendResponse,
    MockBackend,
    OpenAICompatBackend,
    TokenLogprob,
    answer_logits,
    make_backend,
    mock_backend,
)
from fingereval.harness.dataset import Dataset, VideoRecord, bundled_corpus, ingest, load_questions, read_jsonl, write_jsonl
from fingereval.harness.report import emit_report, markdown_report, report_dict
from fingereval.harness.run import EvalConfig, EvalRun, ResponseCache, run_eval, score_records

__all__ = [
    "BackendClient", "BackendRequest", "BackendResponse", "MockBackend", "OpenAICompatBackend",
    "TokenLogprob", "answer_logits", "make_backend", "mock_backend", "Dataset", "VideoRecord",
    "bundled_corpus", "ingest", "load_questions", "read_jsonl", "write_jsonl", "emit_report", "markdown_report",
    "report_dict", "EvalConfig", "EvalRun", "ResponseCache", "run_eval", "score_records",
]
