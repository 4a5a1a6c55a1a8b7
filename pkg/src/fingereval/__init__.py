"""Entity-level video evaluation: question generation, tagged-answer parsing, hierarchical scoring, GRPO math, metrics."""
