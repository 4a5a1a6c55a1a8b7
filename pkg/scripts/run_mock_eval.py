"""Evaluate the bundled mini-corpus under each scoring configuration.

Runs the mock backend with log-probs (soft scoring) and without them
(hard 0/1 scoring), in both score modes, and prints the metric table for
each. Answer accuracy depends only on the parsed answers, so it matches
between the soft and hard runs.

    python scripts/run_mock_eval.py --out runs/mock-eval
"""
from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

from fingereval.harness import EvalConfig, bundled_corpus, emit_report, ingest, mock_backend, run_eval
from fingereval.parse import Strictness
from fingereval.scoring import ScoreMode


def _pct(v) -> str:
    return "-" if v is None else f"{100 * v:.2f}"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default=str(bundled_corpus()))
    ap.add_argument("--backend", default=None, help="fixture directory (default: <dataset>/backend)")
    ap.add_argument("--out", default="runs/mock-eval")
    args = ap.parse_args()

    dataset = ingest(args.dataset)
    fixtures = Path(args.backend) if args.backend else Path(args.dataset) / "backend"
    base = EvalConfig()
    configs = {
        "soft-normalized": base,
        "soft-paper-literal": replace(base, mode=ScoreMode.PAPER_LITERAL),
        "hard-normalized": replace(base, want_logprobs=False),
        "soft-lenient": replace(base, strictness=Strictness.LENIENT),
    }
    print(f"{'config':<20} {'Acc':>7} {'SRCC':>7} {'PLCC':>7} {'tau':>7} {'diff':>7}  failures")
    for name, cfg in configs.items():
        run = run_eval(dataset, mock_backend(fixtures), cfg)
        emit_report(run, Path(args.out) / name)
        m = run.metrics
        pw = m.get("pairwise", {})
        print(f"{name:<20} {_pct(m['overall']['acc']):>7} {_pct(m['overall']['srcc']):>7} "
              f"{_pct(m['overall']['plcc']):>7} {_pct(pw.get('tau')):>7} {_pct(pw.get('diff')):>7}  "
              f"{len(run.failures)}")
    print(f"reports written under {args.out}")


if __name__ == "__main__":
    main()
