"""Exception types raised across the package."""


class FingerError(Exception):
    """Base class for all package errors."""


# qgen
class ClientError(FingerError):
    """LLM/backend transport failure after exhausting retries."""


class ParseError(FingerError, ValueError):
    """An LLM response did not have the expected structure."""


class ExtractionEmpty(FingerError):
    """A question-generation response yielded zero pattern matches."""


class SinkError(FingerError, OSError):
    pass


# response-parse
class NoAnswerTag(FingerError, ValueError):
    pass


# scoring
class NoAnswerTokens(FingerError, ValueError):
    """None of the Yes/No token-set members were present in the logits."""


class EmptyDimension(FingerError, ValueError):
    pass


class WeightSumInvalid(FingerError, ValueError):
    pass


class MissingDimension(FingerError, ValueError):
    pass


class IdMismatch(FingerError, ValueError):
    pass


# grpo
class GroupSizeMismatch(FingerError, ValueError):
    pass


class NonFiniteInput(FingerError, ValueError):
    pass


class AlignmentError(FingerError, ValueError):
    pass


class DivergenceDetected(FingerError, FloatingPointError):
    pass


# metrics
class DegenerateVariance(FingerError, ValueError):
    """One of the variables is constant, so the correlation is undefined."""


class EmptyInput(FingerError, ValueError):
    pass


# harness
class SchemaError(FingerError, ValueError):
    pass


class DanglingReference(FingerError, ValueError):
    pass


class DuplicateId(FingerError, ValueError):
    pass


class FatalBackend(FingerError):
    """Every backend call in a run failed."""


class FixtureMissing(FingerError, KeyError):
    pass
