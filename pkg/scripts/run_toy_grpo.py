"""Compare zero and cold-start GRPO on the synthetic QA environment.

Trains both modes for several seeds, writes one curve.jsonl per run and
prints the step at which each smoothed rate first crosses its threshold.

    python scripts/run_toy_grpo.py --seeds 0 1 2 --steps 2000 --out runs/toy
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from fingereval.grpo import GrpoConfig, SyntheticQaEnv, pretrained_base_policy, train_toy_grpo
from fingereval.grpo.toy import TrainMode


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--acc-threshold", type=float, default=0.95)
    ap.add_argument("--fmt-threshold", type=float, default=0.99)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in args.seeds:
        for mode in (TrainMode.ZERO, TrainMode.COLD_START):
            cfg = GrpoConfig.toy(seed=seed)
            env = SyntheticQaEnv(seed=seed)
            t0 = time.perf_counter()
            curve = train_toy_grpo(env, pretrained_base_policy(env, seed), cfg, args.steps, mode)
            elapsed = time.perf_counter() - t0
            curve.write_jsonl(out / f"curve-{mode.value}-seed{seed}.jsonl")
            row = {
                "mode": mode.value,
                "seed": seed,
                "acc_step": curve.first_step_reaching("acc_rate", args.acc_threshold),
                "fmt_step": curve.first_step_reaching("fmt_rate", args.fmt_threshold),
                "final_acc": float(curve.smoothed("acc_rate")[-1]),
                "final_fmt": float(curve.smoothed("fmt_rate")[-1]),
                "final_kl": float(np.mean(curve.series("kl")[-50:])),
                "seconds": round(elapsed, 1),
            }
            summary.append(row)
            print(f"{mode.value:>10} seed {seed}: acc>={args.acc_threshold} at {row['acc_step']}, "
                  f"format>={args.fmt_threshold} at {row['fmt_step']}, final acc {row['final_acc']:.3f}, "
                  f"final format {row['final_fmt']:.3f}, {elapsed:.1f}s")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    for mode in (TrainMode.ZERO, TrainMode.COLD_START):
        rows = [r for r in summary if r["mode"] == mode.value]
        steps = [r["acc_step"] for r in rows if r["acc_step"] is not None]
        mean_step = f"{np.mean(steps):.0f}" if steps else "never"
        print(f"{mode.value:>10}: mean step to acc threshold {mean_step} "
              f"({len(steps)}/{len(rows)} runs), mean final acc {np.mean([r['final_acc'] for r in rows]):.3f}")


if __name__ == "__main__":
    main()
