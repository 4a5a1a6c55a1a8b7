"""Desk-scale GRPO: a linear autoregressive policy over a tiny tag vocabulary.

A question is a feature vector whose ground-truth answer is the sign of a
fixed linear function of the features. The policy writes a token sequence
that is rendered to text and scored by the same parser and rewards used
for real model outputs, so the full GRPO loop runs end to end in numpy.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from fingereval.errors import DivergenceDetected
from fingereval.grpo.config import GrpoConfig
from fingereval.grpo.objective import group_advantages, kl_k3, token_grpo_loss
from fingereval.grpo.rewards import compute_reward
from fingereval.parse import Answer
from fingereval.scoring import GroundTruth

log = logging.getLogger(__name__)

VOCAB: tuple[str, ...] = (
    "<answer>", "</answer>", "<reason>", "</reason>", "Yes", "No",
    " consistent", " distorted", " the", " scene", "<eos>",
)
TOK = {t: i for i, t in enumerate(VOCAB)}
EOS = TOK["<eos>"]
BOS = len(VOCAB)  # previous-token slot for position 0
MAX_LEN = 9


class TrainMode(str, Enum):
    ZERO = "zero"
    COLD_START = "cold_start"


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class ToyPolicy:
    """Logits = W @ phi / temperature.

    phi concatenates a position-gated copy of ``[x, 1]`` (so each position
    has its own question-dependent weights) with a one-hot of the previous
    token.
    """

    weights: np.ndarray
    dim_x: int
    max_len: int = MAX_LEN
    temperature: float = 1.0

    @classmethod
    def init(cls, dim_x: int, rng: np.random.Generator, scale: float = 0.01,
             max_len: int = MAX_LEN, temperature: float = 1.0) -> ToyPolicy:
        n_feat = max_len * (dim_x + 1) + len(VOCAB) + 1
        return cls(scale * rng.standard_normal((len(VOCAB), n_feat)), dim_x, max_len, temperature)

    def copy(self) -> ToyPolicy:
        return replace(self, weights=self.weights.copy())

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def _step_features(self, x: np.ndarray, t: int, prev: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        phi = np.zeros((n, self.n_features))
        k = self.dim_x + 1
        phi[:, t * k: t * k + self.dim_x] = x
        phi[:, t * k + self.dim_x] = 1.0
        phi[np.arange(n), self.max_len * k + prev] = 1.0
        return phi

    def features(self, x: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        """Teacher-forced features, shape ``(N, T, F)``."""
        n, T = tokens.shape
        prev = np.concatenate([np.full((n, 1), BOS), tokens[:, :-1]], axis=1)
        return np.stack([self._step_features(x, t, prev[:, t]) for t in range(T)], axis=1)

    def forward(self, x: np.ndarray, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-token log-probs ``(N, T)``, full log-softmax ``(N, T, V)`` and features."""
        phi = self.features(x, tokens)
        logp = log_softmax(phi @ self.weights.T / self.temperature)
        lp_tok = np.take_along_axis(logp, tokens[..., None], axis=-1)[..., 0]
        return lp_tok, logp, phi

    def token_logprobs(self, x: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        return self.forward(x, tokens)[0]

    def backward(self, tokens: np.ndarray, logp: np.ndarray, phi: np.ndarray, d_lp: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. weights given d(loss)/d(per-token log-prob)."""
        onehot = np.zeros_like(logp)
        np.put_along_axis(onehot, tokens[..., None], 1.0, axis=-1)
        d_logits = d_lp[..., None] * (onehot - np.exp(logp)) / self.temperature
        return np.einsum("ntv,ntf->vf", d_logits, phi)

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sample until ``<eos>`` or ``max_len``. Returns tokens, mask and per-token log-probs."""
        n = x.shape[0]
        tokens = np.full((n, self.max_len), EOS, dtype=np.int64)
        mask = np.zeros((n, self.max_len))
        lps = np.zeros((n, self.max_len))
        prev = np.full(n, BOS)
        alive = np.ones(n, dtype=bool)
        for t in range(self.max_len):
            logp = log_softmax(self._step_features(x, t, prev) @ self.weights.T / self.temperature)
            # inverse-CDF sampling, one uniform per row
            cdf = np.cumsum(np.exp(logp), axis=1)
            u = rng.random(n)[:, None] * cdf[:, -1:]
            tok = np.minimum((cdf < u).sum(axis=1), len(VOCAB) - 1)
            tok = np.where(alive, tok, EOS)
            tokens[:, t] = tok
            mask[:, t] = alive
            lps[:, t] = np.where(alive, logp[np.arange(n), tok], 0.0)
            alive &= tok != EOS
            prev = tok
            if not alive.any():
                break
        return tokens, mask, lps

    @staticmethod
    def render(tokens: np.ndarray, mask: np.ndarray) -> list[str]:
        return ["".join(VOCAB[t] for t, m in zip(row, mrow) if m and t != EOS) for row, mrow in zip(tokens, mask)]


def encode(pieces: list[str], max_len: int = MAX_LEN) -> tuple[np.ndarray, np.ndarray]:
    ids = [TOK[p] for p in pieces]
    if ids[-1] != EOS:
        ids.append(EOS)
    if len(ids) > max_len:
        raise ValueError("sequence longer than max_len")
    out = np.full(max_len, EOS, dtype=np.int64)
    mask = np.zeros(max_len)
    out[: len(ids)] = ids
    mask[: len(ids)] = 1.0
    return out, mask


@dataclass
class SyntheticQaEnv:
    """Fixed pool of yes/no questions; the answer is ``sign(w* . x)``.

    Questions within ``margin`` of the decision boundary are rejected so the
    task is separable with a finite-norm policy.
    """

    dim_x: int = 4
    n_questions: int = 256
    margin: float = 0.3
    seed: int = 0
    features: np.ndarray = field(init=False, repr=False)
    answers: list[Answer] = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 7919])
        w = rng.standard_normal(self.dim_x)
        w /= np.linalg.norm(w)
        rows = []
        while len(rows) < self.n_questions:
            x = rng.standard_normal(self.dim_x)
            if abs(w @ x) >= self.margin:
                rows.append(x)
        self.features = np.array(rows)
        self.answers = [Answer.YES if w @ x > 0 else Answer.NO for x in self.features]

    def truth(self, i: int) -> GroundTruth:
        return GroundTruth(f"toy-{i}", self.answers[i])

    def sample_questions(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return rng.integers(0, self.n_questions, size=k)

    def labeled_targets(self) -> tuple[np.ndarray, np.ndarray]:
        """Annotated answer + reason sequences for every question (cold-start SFT data)."""
        seqs, masks = [], []
        for a in self.answers:
            evidence = " consistent" if a is Answer.YES else " distorted"
            s, m = encode(["<answer>", a.value, "</answer>", "<reason>", " the", evidence, "</reason>"])
            seqs.append(s)
            masks.append(m)
        return np.array(seqs), np.array(masks)

    def generic_targets(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Instruction-following corpus with no task signal.

        Half the samples use the tag format with a random answer and a
        caption-like reason; the rest answer bare, without tags.
        """
        seqs, masks = [], []
        for _ in range(self.n_questions):
            a = "Yes" if rng.random() < 0.5 else "No"
            if rng.random() < 0.5:
                pieces = ["<answer>", a, "</answer>", "<reason>", " the", " scene", "</reason>"]
            else:
                pieces = [a, " the", " scene"]
            s, m = encode(pieces)
            seqs.append(s)
            masks.append(m)
        return np.array(seqs), np.array(masks)


class Adam:
    def __init__(self, shape: tuple[int, ...], lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sft_loss_and_grad(policy: ToyPolicy, x: np.ndarray, tokens: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Token-averaged cross-entropy over masked targets, with its weight gradient."""
    lp_tok, logp, phi = policy.forward(x, tokens)
    total = mask.sum()
    loss = float(-np.sum(mask * lp_tok) / total)
    return loss, policy.backward(tokens, logp, phi, -mask / total)


def sft_fit(policy: ToyPolicy, x: np.ndarray, tokens: np.ndarray, mask: np.ndarray,
            epochs: int, lr: float) -> list[float]:
    """Full-batch SFT; one Adam step per epoch."""
    opt = Adam(policy.weights.shape, lr)
    losses = []
    for _ in range(epochs):
        loss, grad = sft_loss_and_grad(policy, x, tokens, mask)
        opt.step(policy.weights, grad)
        losses.append(loss)
    return losses


def pretrained_base_policy(env: SyntheticQaEnv, seed: int = 0, epochs: int = 40, lr: float = 0.05) -> ToyPolicy:
    """Stand-in for an instruction-tuned base model: partial format compliance, no task skill."""
    rng = np.random.default_rng([seed, 31337])
    policy = ToyPolicy.init(env.dim_x, rng)
    tokens, mask = env.generic_targets(rng)
    sft_fit(policy, env.features, tokens, mask, epochs, lr)
    return policy


@dataclass
class TrainingCurve:
    mode: TrainMode
    rows: list[dict] = field(default_factory=list)
    sft_losses: list[float] = field(default_factory=list)

    def series(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    def smoothed(self, key: str, window: int = 50) -> np.ndarray:
        s = self.series(key)
        if s.size < window:
            return np.array([s.mean()]) if s.size else s
        return np.convolve(s, np.ones(window) / window, mode="valid")

    def first_step_reaching(self, key: str, threshold: float, window: int = 50) -> int | None:
        """First step whose trailing ``window``-step mean is at least ``threshold``."""
        sm = self.smoothed(key, window)
        hit = np.nonzero(sm >= threshold)[0]
        if hit.size == 0:
            return None
        return int(self.rows[hit[0] + min(window, len(self.rows)) - 1]["step"])

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for r in self.rows:
                f.write(json.dumps(r, sort_keys=True) + "\n")


def train_toy_grpo(
    env: SyntheticQaEnv,
    policy: ToyPolicy,
    cfg: GrpoConfig,
    steps: int,
    mode: TrainMode | str = TrainMode.ZERO,
) -> TrainingCurve:
    """Run GRPO on ``policy`` in place and return the per-step curve.

    Cold-start mode first fits the policy to the environment's annotated
    answer+reason sequences; either way the reference policy is a frozen
    copy of the policy as it stands when RL begins.
    """
    mode = TrainMode(mode)
    curve = TrainingCurve(mode)
    if mode is TrainMode.COLD_START:
        tokens, mask = env.labeled_targets()
        curve.sft_losses = sft_fit(policy, env.features, tokens, mask, cfg.sft_epochs, cfg.learning_rate)
    reference = policy.copy()
    opt = Adam(policy.weights.shape, cfg.learning_rate)
    G, B = cfg.group_size, cfg.questions_per_step

    for step in range(steps):
        rng = np.random.default_rng([cfg.seed, step])
        q_idx = np.repeat(env.sample_questions(rng, B), G)
        x = env.features[q_idx]
        # the sampling policy is the old policy for this step
        tokens, mask, lp_old = policy.sample(x, rng)
        lp_ref = reference.token_logprobs(x, tokens)
        texts = ToyPolicy.render(tokens, mask)
        rewards = [compute_reward(t, env.truth(int(q)))[1] for t, q in zip(texts, q_idx)]
        totals = np.array([r.total for r in rewards])
        adv = np.concatenate([group_advantages(totals[g * G:(g + 1) * G], G) for g in range(B)])

        for _ in range(cfg.inner_iterations):
            lp_new, logp, phi = policy.forward(x, tokens)
            out = token_grpo_loss(lp_new, lp_old, lp_ref, mask, adv, cfg.clip_epsilon, cfg.kl_beta)
            if not math.isfinite(out.loss):
                raise DivergenceDetected(f"non-finite GRPO loss at step {step}")
            grad = policy.backward(tokens, logp, phi, out.grad_logprob_new * mask)
            opt.step(policy.weights, grad)
        if not np.all(np.isfinite(policy.weights)):
            raise DivergenceDetected(f"non-finite policy weights at step {step}")

        kl = float(np.sum(kl_k3(lp_ref, lp_old) * mask) / mask.sum())
        curve.rows.append({
            "step": step + 1,
            "mean_reward": float(totals.mean()),
            "acc_rate": float(np.mean([r.accuracy for r in rewards])),
            "fmt_rate": float(np.mean([r.format for r in rewards])),
            "kl": kl,
            "loss": out.loss,
        })
    return curve
