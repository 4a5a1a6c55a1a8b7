"""Fast built-in oracle checks, run by ``fingereval selftest``.

Each check compares a library routine against an independent computation
(mpmath, a direct formula, finite differences, or a bundled fixture).
"""
from __future__ import annotations

import math
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np


def _softmax_vs_mpmath() -> str:
    import mpmath

    from fingereval.scoring import AnswerLogits, LogitKind, TokenSets, restricted_softmax

    rng = np.random.default_rng(1)
    sets = TokenSets()
    worst = 0.0
    for _ in range(100):
        yes = {t: float(v) for t, v in zip(sets.yes_tokens, rng.normal(0, 5, len(sets.yes_tokens))) if rng.random() < 0.8}
        no = {t: float(v) for t, v in zip(sets.no_tokens, rng.normal(0, 5, len(sets.no_tokens))) if rng.random() < 0.8}
        if not yes or not no:
            continue
        dist = restricted_softmax(AnswerLogits(tuple({**yes, **no}.items()), LogitKind.RAW_LOGIT), sets)
        with mpmath.workdps(50):
            ey = mpmath.fsum(mpmath.exp(mpmath.mpf(v)) for v in yes.values())
            en = mpmath.fsum(mpmath.exp(mpmath.mpf(v)) for v in no.values())
            worst = max(worst, abs(dist.p_yes - float(ey / (ey + en))))
    assert worst <= 1e-12, worst
    return f"max |p_yes - mpmath| = {worst:.1e}"


def _kl_examples() -> str:
    from fingereval.grpo import kl_estimate

    a = kl_estimate(math.log(2.0), 0.0)
    b = kl_estimate(math.log(0.5), 0.0)
    assert abs(a - (2 - math.log(2) - 1)) <= 1e-12 and abs(b - (0.5 + math.log(2) - 1)) <= 1e-12
    assert kl_estimate(-1.3, -1.3) == 0.0
    return f"r=2 -> {a:.6f}, r=0.5 -> {b:.6f}"


def _advantages() -> str:
    from fingereval.grpo import group_advantages

    rng = np.random.default_rng(2)
    for _ in range(100):
        adv = group_advantages(rng.normal(size=16), 16)
        assert abs(adv.mean()) <= 1e-9 and abs(adv.std() - 1) <= 1e-6
    assert not group_advantages([0.5] * 16, 16).any()
    return "mean 0, population std 1, degenerate group -> zeros"


def _spearman_fixture() -> str:
    from fingereval.metrics import PairedScores, plcc, srcc

    r = srcc(PairedScores.from_arrays([1, 2, 3], [3, 1, 2]))
    assert r == -0.5, r
    x = np.random.default_rng(3).normal(size=50)
    y = x + np.random.default_rng(4).normal(size=50)
    direct = float(np.sum((x - x.mean()) * (y - y.mean())) / math.sqrt(np.sum((x - x.mean()) ** 2) * np.sum((y - y.mean()) ** 2)))
    assert abs(plcc(PairedScores.from_arrays(x, y)) - direct) <= 1e-12
    return "srcc([1,2,3],[3,1,2]) = -0.5; plcc matches direct formula"


def _parser_cases() -> str:
    from fingereval.parse import Answer, Strictness, ViolationCode, parse_tagged

    ok = parse_tagged("<answer>Yes</answer><reason>sharp frames</reason>")
    assert ok.format_valid and ok.answer is Answer.YES and ok.reason == "sharp frames"
    bad = parse_tagged("Yes <answer>No</answer><reason>blurry</reason>")
    assert bad.violations == (ViolationCode.AnswerTokenOutsideAnswerTag,), bad.violations
    assert parse_tagged("Yes <answer>No</answer><reason>blurry</reason>", Strictness.LENIENT).format_valid
    assert parse_tagged("<answer>Yes</answer>").violations == (ViolationCode.MissingReasonTag,)
    return "4 tagged-response cases"


def _gradients() -> str:
    from fingereval.grpo.gradcheck import check_instance, random_instance

    rng = np.random.default_rng(5)
    worst = max(max(check_instance(random_instance(rng))) for _ in range(5))
    assert worst <= 1e-5, worst
    return f"5 instances, max relative error {worst:.1e}"


def _mock_eval_determinism() -> str:
    from fingereval.harness import bundled_corpus, emit_report, ingest, mock_backend, run_eval

    root = bundled_corpus()
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            run = run_eval(ingest(root), mock_backend(root / "backend"))
            assert run.conserved
            outs.append([p.read_bytes() for p in emit_report(run, Path(tmp) / str(i))])
    assert outs[0] == outs[1]
    return f"{run.n_questions} questions, identical reports"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("restricted softmax vs mpmath", _softmax_vs_mpmath),
    ("k3 KL closed forms", _kl_examples),
    ("group advantage normalization", _advantages),
    ("correlation fixtures", _spearman_fixture),
    ("tagged-response parser", _parser_cases),
    ("GRPO/SFT gradients vs finite differences", _gradients),
    ("mock-corpus eval determinism", _mock_eval_determinism),
]


def run_selftest(print_fn: Callable[[str], None] = print) -> bool:
    ok = True
    for name, check in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = check()
            print_fn(f"PASS  {name}: {detail} ({time.perf_counter() - t0:.2f}s)")
        except Exception as exc:  # report every check, then fail overall
            ok = False
            print_fn(f"FAIL  {name}: {type(exc).__name__}: {exc}")
    return ok
