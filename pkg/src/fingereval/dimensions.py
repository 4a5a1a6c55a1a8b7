from __future__ import annotations

from enum import Enum


class Dimension(str, Enum):
    """The five assessment axes. Values are the canonical serialized names."""

    VISUAL_QUALITY = "visual_quality"
    TEXT_ALIGNMENT = "text_alignment"
    TEMPORAL_CONSISTENCY = "temporal_consistency"
    FACTUAL_CONSISTENCY = "factual_consistency"
    DYNAMIC_DEGREE = "dynamic_degree"

    @classmethod
    def parse(cls, value: str | Dimension) -> Dimension:
        if isinstance(value, Dimension):
            return value
        try:
            return cls(value.strip().lower().replace("-", "_").replace(" ", "_"))
        except ValueError:
            raise ValueError(f"unknown dimension {value!r}; expected one of {[d.value for d in cls]}") from None


ALL_DIMENSIONS: tuple[Dimension, ...] = tuple(Dimension)
