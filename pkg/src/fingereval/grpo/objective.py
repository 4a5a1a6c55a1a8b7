"""GRPO objective pieces: group advantages, k3 KL estimator, clipped surrogate, SFT loss.

Sequence-level quantities are per-token averages: each output's ratio,
surrogate and KL are computed per token and averaged over that output's
tokens before the group mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fingereval.errors import AlignmentError, GroupSizeMismatch, NonFiniteInput
from fingereval.grpo.config import GrpoConfig
from fingereval.grpo.rewards import Reward
from fingereval.parse import TaggedResponse

STD_FLOOR = 1e-8


def group_advantages(rewards: Sequence[float], group_size: int | None = None) -> np.ndarray:
    """(r - mean) / population std; all zeros when the group is degenerate."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise GroupSizeMismatch("rewards must be a non-empty 1-d sequence")
    if group_size is not None and r.size != group_size:
        raise GroupSizeMismatch(f"expected {group_size} rewards, got {r.size}")
    centered = r - r.mean()
    std = float(np.sqrt(np.mean(centered**2)))
    if std < STD_FLOOR:
        return np.zeros_like(r)
    return centered / std


def kl_estimate(logprob_ref: float, logprob_new: float) -> float:
    """k3 estimator ``r - log r - 1`` with ``r = pi_ref / pi_new``."""
    if not (math.isfinite(logprob_ref) and math.isfinite(logprob_new)):
        raise NonFiniteInput("kl_estimate needs finite log-probabilities")
    d = logprob_ref - logprob_new
    # expm1 keeps precision when the two policies nearly agree
    return max(math.expm1(d) - d, 0.0)


def kl_k3(logprob_ref: np.ndarray, logprob_new: np.ndarray) -> np.ndarray:
    d = np.asarray(logprob_ref, dtype=np.float64) - np.asarray(logprob_new, dtype=np.float64)
    return np.maximum(np.expm1(d) - d, 0.0)


@dataclass
class Rollout:
    logprob_new: np.ndarray
    logprob_old: np.ndarray
    logprob_ref: np.ndarray
    reward: Reward | None = None
    advantage: float = 0.0
    response: TaggedResponse | None = None


@dataclass
class RolloutGroup:
    question_id: str
    outputs: list[Rollout]

    @classmethod
    def with_advantages(cls, question_id: str, outputs: list[Rollout]) -> RolloutGroup:
        adv = group_advantages([o.reward.total for o in outputs])
        for o, a in zip(outputs, adv):
            o.advantage = float(a)
        return cls(question_id, outputs)


@dataclass
class LossBreakdown:
    loss: float
    policy_term: float
    kl_term: float
    clip_fraction: float
    # d loss / d logprob_new, same shape as the padded token arrays
    grad_logprob_new: np.ndarray = field(repr=False)


def pad(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    out = np.zeros((len(seqs), width))
    mask = np.zeros((len(seqs), width))
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return out, mask


def token_grpo_loss(
    lp_new: np.ndarray,
    lp_old: np.ndarray,
    lp_ref: np.ndarray,
    mask: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    kl_beta: float,
) -> LossBreakdown:
    """Vectorised GRPO loss over ``(n_outputs, n_tokens)`` padded arrays.

    Averages over every output passed in, so a batch of several equal-size
    groups gives the mean of the per-group losses.
    """
    lengths = mask.sum(axis=1)
    if np.any(lengths <= 0):
        raise AlignmentError("every output needs at least one token")
    if not (np.all(np.isfinite(lp_new[mask > 0])) and np.all(np.isfinite(lp_old[mask > 0]))
            and np.all(np.isfinite(lp_ref[mask > 0]))):
        raise NonFiniteInput("non-finite log-probabilities")
    n = lp_new.shape[0]
    adv = np.asarray(advantages, dtype=np.float64)[:, None]
    # padded slots hold zeros; masking after exp keeps them inert
    ratio = np.exp(np.where(mask > 0, lp_new - lp_old, 0.0))
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    unclipped_obj = ratio * adv
    clipped_obj = clipped * adv
    use_unclipped = unclipped_obj <= clipped_obj
    surrogate = np.where(use_unclipped, unclipped_obj, clipped_obj)
    d = np.where(mask > 0, lp_ref - lp_new, 0.0)
    kl = np.maximum(np.expm1(d) - d, 0.0)

    weight = mask / lengths[:, None] / n
    policy_term = -float(np.sum(surrogate * weight))
    kl_term = kl_beta * float(np.sum(kl * weight))

    d_surr = np.where(use_unclipped, unclipped_obj, 0.0)
    d_kl = -np.expm1(d)
    grad = -(d_surr - kl_beta * d_kl) * weight
    active = (mask > 0) & ~use_unclipped
    return LossBreakdown(
        loss=policy_term + kl_term,
        policy_term=policy_term,
        kl_term=kl_term,
        clip_fraction=float(active.sum() / mask.sum()),
        grad_logprob_new=grad,
    )


def grpo_loss(group: RolloutGroup, cfg: GrpoConfig) -> LossBreakdown:
    outputs = group.outputs
    if len(outputs) != cfg.group_size:
        raise GroupSizeMismatch(f"group has {len(outputs)} outputs, config expects {cfg.group_size}")
    for i, o in enumerate(outputs):
        if not (len(o.logprob_new) == len(o.logprob_old) == len(o.logprob_ref)):
            raise AlignmentError(f"output {i}: new/old/ref log-prob lengths differ")
    lp_new, mask = pad([np.asarray(o.logprob_new, dtype=np.float64) for o in outputs])
    lp_old, _ = pad([np.asarray(o.logprob_old, dtype=np.float64) for o in outputs])
    lp_ref, _ = pad([np.asarray(o.logprob_ref, dtype=np.float64) for o in outputs])
    adv = np.array([o.advantage for o in outputs])
    return token_grpo_loss(lp_new, lp_old, lp_ref, mask, adv, cfg.clip_epsilon, cfg.kl_beta)


def sft_cross_entropy(
    target_tokens: Sequence[int],
    predicted_logprobs: np.ndarray,
    mask: Sequence[float] | None = None,
) -> float:
    """Token-averaged cross-entropy of integer targets under ``(T, V)`` log-probs.

    ``mask`` selects which targets count, e.g. only the answer token for
    answer-only supervision or answer plus reason tokens.
    """
    lp = np.asarray(predicted_logprobs, dtype=np.float64)
    y = np.asarray(target_tokens, dtype=np.int64)
    if lp.ndim != 2 or lp.shape[0] != y.shape[0]:
        raise AlignmentError(f"{y.shape[0]} targets vs log-prob array of shape {lp.shape}")
    m = np.ones(y.shape[0]) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.shape != y.shape:
        raise AlignmentError("mask length differs from targets")
    if m.sum() <= 0:
        raise AlignmentError("mask selects no tokens")
    picked = lp[np.arange(y.shape[0]), y]
    return float(-np.sum(m * picked) / m.sum())
