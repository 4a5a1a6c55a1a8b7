"""Regenerate the bundled 5-video synthetic corpus under src/fingereval/data/minicorpus.

Questions come from running the real qgen pipeline against canned LLM
responses, so the corpus doubles as a qgen fixture. Everything is seeded;
rerunning produces identical files.
"""
from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

import numpy as np

from fingereval.dimensions import ALL_DIMENSIONS, Dimension
from fingereval.harness.dataset import write_jsonl
from fingereval.qgen import Entity, IclExampleSet, JsonlSink, MockLlmClient, UserPrompt, run_qgen_batch

OUT = Path(__file__).resolve().parents[1] / "src" / "fingereval" / "data" / "minicorpus"

PROMPTS = [
    UserPrompt("p1", "A dog chases a red ball across a sunny park"),
    UserPrompt("p2", "A chef slices bread on a wooden table"),
    UserPrompt("p3", "A paper boat floats down a rainy street"),
]
ENTITIES = {
    "p1": [
        {"name": "dog", "attributes": [], "actions": ["chases"]},
        {"name": "red ball", "attributes": ["red"], "actions": []},
        {"name": "park", "attributes": ["sunny"], "actions": []},
    ],
    "p2": [
        {"name": "chef", "attributes": [], "actions": ["slices bread"]},
        {"name": "table", "attributes": ["wooden"], "actions": []},
    ],
    "p3": [
        {"name": "paper boat", "attributes": ["paper"], "actions": ["floats"]},
        {"name": "street", "attributes": ["rainy"], "actions": []},
    ],
}
VIDEOS = [
    ("v1", "p1", "gen-a"), ("v2", "p1", "gen-b"),
    ("v3", "p2", "gen-a"), ("v4", "p2", "gen-b"),
    ("v5", "p3", "gen-a"),
]
# latent quality per video drives annotations and mock answers
QUALITY = {"v1": 0.85, "v2": 0.35, "v3": 0.7, "v4": 0.5, "v5": 0.6}

QUESTION_LINES = {
    Dimension.VISUAL_QUALITY: ["Q1: [POS] Is the {e} rendered sharply, without blur or noise?",
                               "Q2: [NEG] Does the {e} show deformed or distorted parts?"],
    Dimension.TEXT_ALIGNMENT: ["Q1: [POS] Does the video show the {e} described in the prompt?"],
    Dimension.TEMPORAL_CONSISTENCY: ["Q1: [POS] Does the {e} keep the same appearance throughout the video?",
                                     "Q2: [NEG] Does the {e} flicker or suddenly change shape between frames?"],
    Dimension.FACTUAL_CONSISTENCY: ["Q1: [POS] Do the attributes of the {e} in the video (such as size, shape, "
                                    "and material) align with real-world characteristics?"],
    Dimension.DYNAMIC_DEGREE: ["Q1: [POS] Does the {e} show a reasonable amount of motion?"],
}


def canned_llm() -> MockLlmClient:
    icl = IclExampleSet.load()
    client = MockLlmClient({})
    for p in PROMPTS:
        client.add(icl.render_extraction(p.text), json.dumps(ENTITIES[p.prompt_id]))
        for raw in ENTITIES[p.prompt_id]:
            ent = Entity(raw["name"], tuple(raw["attributes"]), tuple(raw["actions"]), p.prompt_id)
            for d in ALL_DIMENSIONS:
                lines = [line.format(e=ent.name) for line in QUESTION_LINES[d]]
                if p.prompt_id == "p3" and ent.name == "street" and d is Dimension.DYNAMIC_DEGREE:
                    lines = ["Q1: Is the rain on the street visibly falling?"]  # no marker: defaults to positive
                text = "Here are the questions:\n" + "\n".join(lines) + "\n"
                client.add(icl.render_questions(d, p.text, ent), text)
    return client


def tokens_for(answer: str, reason_words: list[str]) -> list[str]:
    return ["<answer>", answer, "</answer>", "<reason>", *reason_words, "</reason>"]


def answer_alternatives(p_yes: float) -> list[tuple[str, float]]:
    """Top-k candidates at the answer position; 3% of mass sits outside the Yes/No sets."""
    inside = 0.97
    yes = [("Yes", 0.8), (" Yes", 0.12), ("yes", 0.08)]
    no = [("No", 0.8), (" No", 0.12), ("no", 0.08)]
    alts = [(t, math.log(inside * p_yes * w)) for t, w in yes] + [(t, math.log(inside * (1 - p_yes) * w)) for t, w in no]
    alts.append(("Maybe", math.log(1 - inside)))
    return sorted(alts, key=lambda a: -a[1])


def main() -> None:
    rng = np.random.default_rng(20240611)
    if OUT.exists():
        shutil.rmtree(OUT)
    (OUT / "backend").mkdir(parents=True)

    client = canned_llm()
    client.dump(OUT / "llm_mock.json")
    write_jsonl(OUT / "prompts.jsonl", ({"prompt_id": p.prompt_id, "text": p.text} for p in PROMPTS))
    write_jsonl(OUT / "videos.jsonl", (
        {"video_id": v, "prompt_id": p, "generator_name": g, "media_ref": f"media/{v}.mp4"} for v, p, g in VIDEOS
    ))
    videos_by_prompt: dict[str, list[str]] = {}
    for v, p, _ in VIDEOS:
        videos_by_prompt.setdefault(p, []).append(v)
    sink = JsonlSink(OUT / "questions.jsonl")
    report = run_qgen_batch(PROMPTS, client, IclExampleSet.load(), sink, videos_by_prompt)
    assert not report.failures, report.failures

    questions = [json.loads(line) for line in (OUT / "questions.jsonl").read_text().splitlines()]
    annotations, responses = [], []
    for q in questions:
        quality = QUALITY[q["video_id"]]
        good = rng.random() < quality
        truth_yes = good if q["polarity"] == 1 else not good
        answer = "Yes" if truth_yes else "No"
        annotations.append({"question_id": q["question_id"], "answer": answer,
                            "reason": f"Annotated: the {q['entity']} {'looks right' if good else 'has a visible problem'}."})

        # mock model: noisy view of the latent quality, right about 85% of the time
        logit = math.log(quality / (1 - quality)) + (1.2 if good else -1.2) + rng.normal(0, 0.8)
        p_good = 1 / (1 + math.exp(-logit))
        p_yes = p_good if q["polarity"] == 1 else 1 - p_good
        pred = "Yes" if p_yes >= 0.5 else "No"
        reason = [" The", f" {q['entity']}", " looks", " consistent." if p_good >= 0.5 else " wrong."]
        toks = tokens_for(pred, reason)
        per_token = []
        for i, t in enumerate(toks):
            if i == 1:
                alts = answer_alternatives(p_yes)
                lp = dict(alts)[t]
                per_token.append({"token": t, "logprob": lp, "top_k": [{"token": a, "logprob": v} for a, v in alts]})
            else:
                per_token.append({"token": t, "logprob": -0.01, "top_k": []})
        if q["video_id"] == "v5":
            per_token = []  # backend without logprobs: this video is scored w/o prob
        responses.append({"question_id": q["question_id"], "raw_text": "".join(toks), "per_token": per_token})

    write_jsonl(OUT / "annotations.jsonl", annotations)
    write_jsonl(OUT / "backend" / "responses.jsonl", responses)
    write_jsonl(OUT / "references.jsonl", (
        {"video_id": v, "mos": round(1 + 4 * QUALITY[v] + float(rng.normal(0, 0.2)), 3)} for v, _, _ in VIDEOS
    ))
    write_jsonl(OUT / "preferences.jsonl", [
        {"pair_id": "pair1", "video_a": "v1", "video_b": "v2", "label": "win"},
        {"pair_id": "pair2", "video_a": "v3", "video_b": "v4", "label": "win"},
        {"pair_id": "pair3", "video_a": "v4", "video_b": "v5", "label": "tie"},
    ])
    print(f"wrote {len(questions)} questions for {len(VIDEOS)} videos to {OUT}")


if __name__ == "__main__":
    main()
