"""Correlation and pairwise-preference metrics against human references."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from fingereval.errors import DegenerateVariance, EmptyInput


class PreferenceLabel(str, Enum):
    WIN = "win"
    LOSE = "lose"
    TIE = "tie"


@dataclass(frozen=True)
class PairedScores:
    ids: tuple[str, ...]
    predicted: tuple[float, ...]
    reference: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.predicted) == len(self.reference)):
            raise ValueError("ids, predicted and reference must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, float, float]]) -> PairedScores:
        items = list(items)
        return cls(
            tuple(i for i, _, _ in items),
            tuple(float(p) for _, p, _ in items),
            tuple(float(r) for _, _, r in items),
        )

    @classmethod
    def from_arrays(cls, predicted: Sequence[float], reference: Sequence[float]) -> PairedScores:
        return cls(tuple(str(i) for i in range(len(predicted))), tuple(map(float, predicted)), tuple(map(float, reference)))


@dataclass(frozen=True)
class PreferencePair:
    pair_id: str
    score_a: float
    score_b: float
    human_label: PreferenceLabel


@dataclass(frozen=True)
class PairwiseResult:
    tau: float
    diff: float | None  # None when every human label is a tie
    tie_threshold: float
    n: int
    n_decisive: int


def _check(pairs: PairedScores) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pairs.predicted, dtype=np.float64)
    y = np.asarray(pairs.reference, dtype=np.float64)
    if x.size < 2:
        raise EmptyInput("correlation needs at least 2 items")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("scores must be finite")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("one variable has zero variance")
    r = float(np.dot(dx, dy)) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    start = 0
    n = values.size
    while start < n:
        stop = start + 1
        while stop < n and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
        start = stop
    return ranks


def srcc(pairs: PairedScores) -> float:
    x, y = _check(pairs)
    return _pearson(average_ranks(x), average_ranks(y))


def plcc(pairs: PairedScores) -> float:
    x, y = _check(pairs)
    return _pearson(x, y)


def _predict(a: float, b: float, threshold: float | None) -> PreferenceLabel:
    if threshold is not None and abs(a - b) <= threshold:
        return PreferenceLabel.TIE
    return PreferenceLabel.WIN if a > b else PreferenceLabel.LOSE


def default_threshold_grid(pairs: Sequence[PreferencePair]) -> list[float]:
    """Zero plus every distinct score gap: accuracy can only change at these points."""
    return sorted({0.0} | {abs(p.score_a - p.score_b) for p in pairs})


def pairwise_tau_diff(
    pairs: Sequence[PreferencePair],
    tie_threshold_grid: Sequence[float] | None = None,
) -> PairwiseResult:
    """Pairwise preference accuracy.

    ``diff`` scores only pairs humans did not call a tie, predicting a win
    iff ``score_a > score_b``. ``tau`` scores all pairs, predicting a tie
    when the score gap is within a threshold; the threshold is the grid
    value with the best accuracy (smallest one on ties).
    """
    if not pairs:
        raise EmptyInput("no preference pairs")
    grid = sorted(set(default_threshold_grid(pairs) if tie_threshold_grid is None else tie_threshold_grid))
    if not grid:
        raise EmptyInput("empty tie threshold grid")
    if any(t < 0 for t in grid):
        raise ValueError("tie thresholds must be non-negative")

    labels = [PreferenceLabel(p.human_label) for p in pairs]
    decisive = [(p, lab) for p, lab in zip(pairs, labels) if lab is not PreferenceLabel.TIE]
    diff = None
    if decisive:
        diff = sum(_predict(p.score_a, p.score_b, None) is lab for p, lab in decisive) / len(decisive)

    best_t, best_hits = grid[0], -1
    for t in grid:
        hits = sum(_predict(p.score_a, p.score_b, t) is lab for p, lab in zip(pairs, labels))
        if hits > best_hits:
            best_t, best_hits = t, hits
    return PairwiseResult(best_hits / len(pairs), diff, best_t, len(pairs), len(decisive))


def metrics_report(
    paired: PairedScores | None = None,
    preferences: Sequence[PreferencePair] | None = None,
    tie_threshold_grid: Sequence[float] | None = None,
) -> dict:
    """The metrics-report.json payload. Undefined metrics are null and flagged."""
    report: dict = {
        "schema_version": 1,
        "srcc": None,
        "plcc": None,
        "tau": None,
        "diff": None,
        "tie_threshold": None,
        "n": 0,
        "n_pairs": 0,
        "degenerate_flags": [],
    }
    flags: list[str] = report["degenerate_flags"]
    if paired is not None:
        report["n"] = len(paired.ids)
        for name, fn in (("srcc", srcc), ("plcc", plcc)):
            try:
                report[name] = fn(paired)
            except (DegenerateVariance, EmptyInput) as exc:
                flags.append(f"{name}: {exc}")
    if preferences:
        res = pairwise_tau_diff(preferences, tie_threshold_grid)
        report.update(tau=res.tau, diff=res.diff, tie_threshold=res.tie_threshold, n_pairs=res.n)
        if res.diff is None:
            flags.append("diff: every human label is a tie")
    return report

