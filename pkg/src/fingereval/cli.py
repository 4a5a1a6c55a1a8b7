"""Command-line entry point: ``fingereval <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from fingereval.errors import FingerError
from fingereval.parse import Strictness
from fingereval.scoring import ScoreMode, TokenSets, uniform_weights

log = logging.getLogger("fingereval")


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _eval_config(args: argparse.Namespace):
    from fingereval.harness import EvalConfig

    weights = _load_json(args.weights) if args.weights else {d.value: w for d, w in uniform_weights().items()}
    sets = TokenSets.from_dict(_load_json(args.token_sets)) if args.token_sets else TokenSets()
    return EvalConfig(token_sets=sets, weights=weights, mode=ScoreMode.parse(args.mode),
                      strictness=Strictness(args.strictness))


def _llm_client(spec: str):
    from fingereval.qgen import HttpLlmClient, MockLlmClient

    if spec.startswith("mock:"):
        return MockLlmClient.from_file(spec[len("mock:"):])
    if spec.startswith(("http://", "https://")):
        return HttpLlmClient(spec)
    raise ValueError(f"unrecognised LLM endpoint {spec!r}; use mock:<file.json> or an http(s) URL")


def cmd_qgen(args: argparse.Namespace) -> int:
    from fingereval.harness import read_jsonl
    from fingereval.qgen import IclExampleSet, JsonlSink, UserPrompt, run_qgen_batch

    prompts = [UserPrompt(str(r["prompt_id"]), str(r["text"])) for _, r in read_jsonl(args.prompts)]
    videos_by_prompt: dict[str, list[str]] = {}
    if args.videos:
        for _, r in read_jsonl(args.videos):
            videos_by_prompt.setdefault(str(r["prompt_id"]), []).append(str(r["video_id"]))
    icl = IclExampleSet.from_dir(args.icl_dir) if args.icl_dir else IclExampleSet.load(args.icl_version)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sink = JsonlSink(out, out.with_name("entities.jsonl"))
    report = run_qgen_batch(prompts, _llm_client(args.llm), icl, sink, videos_by_prompt, parallelism=args.parallelism)
    out.with_name("qgen-report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{report.n_questions} questions from {report.n_entities} entities; {len(report.failures)} failures")
    return 1 if report.failures and not report.n_questions else 0


def cmd_eval(args: argparse.Namespace) -> int:
    from fingereval.harness import ResponseCache, emit_report, ingest, make_backend, run_eval

    dataset = ingest(args.dataset)
    cache = ResponseCache(args.cache) if args.cache else None
    run = run_eval(dataset, make_backend(args.backend), _eval_config(args), cache, args.parallelism)
    paths = emit_report(run, args.out, args.format)
    print(f"run {run.run_id}: {len(run.results)} answered, {len(run.failures)} failed; wrote "
          + ", ".join(str(p) for p in paths))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    """Offline scoring of recorded responses (``answer_logits`` or ``per_token`` layout)."""
    from fingereval.harness import Dataset, VideoRecord, load_questions, read_jsonl, score_records, write_jsonl

    questions = load_questions(args.questions)
    videos = {q.video_id: VideoRecord(q.video_id, q.entity.source_prompt, "offline") for q in questions}
    records = {str(r["question_id"]): r for _, r in read_jsonl(args.responses)}
    run = score_records(Dataset(videos, questions), records, _eval_config(args), f"offline:{Path(args.responses).name}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(out, (t.to_record(v) for v, t in sorted(run.scores.items())))
    for f in run.failures:
        print(f"failed: {f['question_id']} [{f['stage']}] {f['error']}", file=sys.stderr)
    print(f"scored {len(run.scores)} videos ({len(run.failures)} question failures) -> {out}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    from fingereval.harness import read_jsonl
    from fingereval.metrics import PairedScores, PreferenceLabel, PreferencePair, metrics_report

    scores = {str(r["video_id"]): r for _, r in read_jsonl(args.scores)}
    pred = {v: r[args.column] for v, r in scores.items() if r.get(args.column) is not None}
    if not pred:
        raise ValueError(f"no {args.column!r} scores in {args.scores}")
    paired = None
    if args.references:
        refs = {str(r["video_id"]): float(r["mos"]) for _, r in read_jsonl(args.references)}
        ids = sorted(set(pred) & set(refs))
        paired = PairedScores(tuple(ids), tuple(pred[i] for i in ids), tuple(refs[i] for i in ids))
    prefs = None
    if args.preferences:
        prefs = [
            PreferencePair(str(r["pair_id"]), pred[r["video_a"]], pred[r["video_b"]], PreferenceLabel(r["label"]))
            for _, r in read_jsonl(args.preferences) if r["video_a"] in pred and r["video_b"] in pred
        ]
    report = metrics_report(paired, prefs)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({k: report[k] for k in ("srcc", "plcc", "tau", "diff", "n", "n_pairs")}))
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    from fingereval.grpo import GrpoConfig, SyntheticQaEnv, pretrained_base_policy, train_toy_grpo

    cfg = GrpoConfig.load(args.config, GrpoConfig.toy()) if args.config else GrpoConfig.toy()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    env = SyntheticQaEnv(seed=cfg.seed)
    policy = pretrained_base_policy(env, cfg.seed)
    curve = train_toy_grpo(env, policy, cfg, args.steps, args.start)
    curve.write_jsonl(args.out)
    acc = curve.first_step_reaching("acc_rate", 0.95)
    fmt = curve.first_step_reaching("fmt_rate", 0.99)
    last = curve.smoothed("mean_reward")[-1]
    print(f"{args.start}: final smoothed reward {last:.3f}; acc>=0.95 at step {acc}; format>=0.99 at step {fmt}")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    from fingereval.selftest import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fingereval", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scoring_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--mode", default="normalized", choices=["paper-literal", "normalized"])
        sp.add_argument("--strictness", default="strict", choices=[s.value for s in Strictness])
        sp.add_argument("--weights", help="JSON object mapping dimension to weight")
        sp.add_argument("--token-sets", help='JSON object {"yes": [...], "no": [...]}')

    sp = sub.add_parser("qgen", help="prompts.jsonl -> questions.jsonl")
    sp.add_argument("prompts")
    sp.add_argument("--llm", required=True, help="mock:<responses.json> or an http(s) endpoint")
    sp.add_argument("--videos", help="videos.jsonl; copies each prompt's questions to its videos")
    sp.add_argument("--out", default="questions.jsonl")
    sp.add_argument("--icl-version", default="v1")
    sp.add_argument("--icl-dir", help="directory of custom templates (overrides --icl-version)")
    sp.add_argument("--parallelism", type=int, default=1)
    sp.set_defaults(func=cmd_qgen)

    sp = sub.add_parser("eval", help="dataset + backend -> scores.jsonl, report.json, report.md")
    sp.add_argument("dataset", help="dataset directory")
    sp.add_argument("--backend", required=True, help="mock:<fixture_dir> or an http(s) base URL")
    sp.add_argument("--out", default="eval-out")
    sp.add_argument("--cache", help="response cache directory (enables resume)")
    sp.add_argument("--format", nargs="+", default=["json", "markdown"], choices=["json", "markdown"])
    sp.add_argument("--parallelism", type=int, default=1)
    scoring_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("score", help="recorded responses.jsonl + questions.jsonl -> scores.jsonl")
    sp.add_argument("responses")
    sp.add_argument("--questions", required=True)
    sp.add_argument("--out", default="scores.jsonl")
    scoring_flags(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("metrics", help="scores.jsonl + references -> metrics-report.json")
    sp.add_argument("scores")
    sp.add_argument("--references", help="references.jsonl {video_id, mos}")
    sp.add_argument("--preferences", help="preferences.jsonl {pair_id, video_a, video_b, label}")
    sp.add_argument("--column", default="overall", help="score column to correlate")
    sp.add_argument("--out", default="metrics-report.json")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("train-toy", help="GRPO on the built-in toy policy -> curve.jsonl")
    sp.add_argument("--start", default="cold_start", choices=["zero", "cold_start"])
    sp.add_argument("--config", help="grpo.config JSON overriding the toy defaults")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="curve.jsonl")
    sp.set_defaults(func=cmd_train_toy)

    sp = sub.add_parser("selftest", help="run the built-in oracle checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FingerError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
