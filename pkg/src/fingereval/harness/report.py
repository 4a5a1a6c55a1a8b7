"""Report emission. Cross-video tables always use normalized scores."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from fingereval.dimensions import ALL_DIMENSIONS
from fingereval.errors import FingerError
from fingereval.harness.dataset import write_jsonl
from fingereval.harness.run import EvalRun
from fingereval.scoring import normalized_view

SCHEMA_VERSION = 1


class ReportIoError(FingerError, OSError):
    pass


def prob_label(prob_mode: bool) -> str:
    return "(w/ prob)" if prob_mode else "(w/o prob)"


def video_rows(run: EvalRun) -> list[dict]:
    rows = []
    for vid, tree in sorted(run.scores.items()):
        norm = normalized_view(tree)
        row = {"video_id": vid, "scoring": prob_label(tree.prob_mode), "partial": norm.partial}
        for d in ALL_DIMENSIONS:
            row[d.value] = norm.dim_scores.get(d)
        row["overall"] = norm.overall
        rows.append(row)
    return rows


def report_dict(run: EvalRun) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "run_id": run.run_id,
        "config": run.config,
        "counts": {"questions": run.n_questions, "results": len(run.results), "failures": len(run.failures)},
        "metrics": run.metrics,
        "videos": video_rows(run),
        "questions": [r.to_dict() for r in run.results.values()],
        "failures": run.failures,
    }


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{100 * v:.2f}"
    return str(v)


def markdown_report(run: EvalRun) -> str:
    lines = [f"# Evaluation run {run.run_id}", ""]
    lines += [f"mode: {run.config['mode']} (tables use normalized scores), strictness: {run.config['strictness']}, "
              f"backend: {run.config.get('backend_id', '?')}", ""]
    lines += ["## Answer accuracy and correlation (Acc/SRCC/PLCC)", "",
              "| Dimension | Acc/SRCC/PLCC | questions | videos |", "|---|---|---|---|"]
    for name, row in [*run.metrics["dimensions"].items(), ("overall", run.metrics["overall"])]:
        triple = "/".join(_fmt(row.get(k)) for k in ("acc", "srcc", "plcc"))
        lines.append(f"| {name} | {triple} | {row.get('n_questions', 0)} | {row.get('n', 0)} |")
    if "pairwise" in run.metrics:
        pw = run.metrics["pairwise"]
        lines += ["", f"pairwise: tau {_fmt(pw['tau'])}, diff {_fmt(pw['diff'])}, tie threshold {pw['tie_threshold']:.6g}"]
    header = ["Video", "Scoring", *[d.value for d in ALL_DIMENSIONS], "overall"]
    lines += ["", "## Per-video scores", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in video_rows(run):
        cells = [row["video_id"], row["scoring"], *[_fmt(row[d.value]) for d in ALL_DIMENSIONS],
                 _fmt(row["overall"]) + (" (partial)" if row["partial"] else "")]
        lines.append("| " + " | ".join(cells) + " |")
    if run.failures:
        lines += ["", f"## Failures ({len(run.failures)})", ""]
        lines += [f"- {f['question_id']} [{f['stage']}]: {f['error']}" for f in run.failures]
    if run.metrics.get("degenerate_flags"):
        lines += ["", "## Degenerate metrics", ""]
        lines += [f"- {flag}" for flag in run.metrics["degenerate_flags"]]
    return "\n".join(lines) + "\n"


def emit_report(run: EvalRun, out_dir: str | Path, formats: Iterable[str] = ("json", "markdown")) -> list[Path]:
    """Write report.json / report.md plus scores.jsonl into ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        scores_path = out_dir / "scores.jsonl"
        write_jsonl(scores_path, (t.to_record(v) for v, t in sorted(run.scores.items())))
        written.append(scores_path)
        for fmt in formats:
            if fmt == "json":
                path = out_dir / "report.json"
                path.write_text(json.dumps(report_dict(run), indent=2, sort_keys=True) + "\n", encoding="utf-8")
            elif fmt in ("markdown", "markdown-table", "md"):
                path = out_dir / "report.md"
                path.write_text(markdown_report(run), encoding="utf-8")
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            written.append(path)
    except OSError as exc:
        raise ReportIoError(f"cannot write report to {out_dir}: {exc}") from exc
    return written
