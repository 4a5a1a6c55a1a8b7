from fingereval.qgen.client import (
    HttpLlmClient,
    LlmClient,
    LlmRequest,
    LlmResponse,
    MockLlmClient,
    call_with_retry,
    prompt_key,
)
from fingereval.qgen.generate import (
    QUESTION_PATTERN,
    JsonlSink,
    extract_entities,
    extract_questions,
    generate_questions,
    parse_entity_list,
    run_qgen_batch,
)
from fingereval.qgen.models import Entity, EntityQuestion, LlmExchange, QgenReport, UserPrompt
from fingereval.qgen.templates import IclExampleSet

__all__ = [
    "HttpLlmClient", "LlmClient", "LlmRequest", "LlmResponse", "MockLlmClient", "call_with_retry",
    "prompt_key", "QUESTION_PATTERN", "JsonlSink", "extract_entities", "extract_questions",
    "generate_questions", "parse_entity_list", "run_qgen_batch", "Entity", "EntityQuestion",
    "LlmExchange", "QgenReport", "UserPrompt", "IclExampleSet",
]
