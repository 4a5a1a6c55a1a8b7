"""Central finite-difference checks of the toy policy's analytic gradients.

The loss values come from the objective functions (``token_grpo_loss``,
``sft_cross_entropy``); the analytic side chains their log-prob gradient
through :meth:`ToyPolicy.backward`. Instances whose importance ratios sit
next to a clip boundary are resampled, since the loss has a kink there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fingereval.grpo.objective import sft_cross_entropy, token_grpo_loss
from fingereval.grpo.toy import VOCAB, ToyPolicy

KINK_GUARD = 1e-3


@dataclass
class GradCheckInstance:
    policy: ToyPolicy
    x: np.ndarray
    tokens: np.ndarray
    mask: np.ndarray
    lp_old: np.ndarray
    lp_ref: np.ndarray
    advantages: np.ndarray
    clip_epsilon: float
    kl_beta: float


def random_instance(
    rng: np.random.Generator,
    n_outputs: int = 4,
    dim_x: int = 3,
    max_len: int = 5,
    clip_epsilon: float = 0.2,
    kl_beta: float = 0.04,
    max_tries: int = 100,
) -> GradCheckInstance:
    """Policy, rollouts from a perturbed old policy, and a separate reference policy."""
    for _ in range(max_tries):
        policy = ToyPolicy.init(dim_x, rng, scale=0.5, max_len=max_len)
        old = ToyPolicy(policy.weights + 0.3 * rng.standard_normal(policy.weights.shape), dim_x, max_len)
        ref = ToyPolicy(policy.weights + 0.3 * rng.standard_normal(policy.weights.shape), dim_x, max_len)
        x = rng.standard_normal((n_outputs, dim_x))
        tokens, mask, lp_old = old.sample(x, rng)
        lp_ref = ref.token_logprobs(x, tokens)
        adv = rng.standard_normal(n_outputs)
        ratio = np.exp(policy.token_logprobs(x, tokens) - lp_old)[mask > 0]
        gap = np.minimum(np.abs(ratio - (1 - clip_epsilon)), np.abs(ratio - (1 + clip_epsilon)))
        if gap.min() > KINK_GUARD and np.all(np.abs(adv) > KINK_GUARD):
            return GradCheckInstance(policy, x, tokens, mask, lp_old, lp_ref, adv, clip_epsilon, kl_beta)
    raise RuntimeError("could not draw an instance away from the clip boundaries")


def _with_weights(inst: GradCheckInstance, w: np.ndarray) -> ToyPolicy:
    p = inst.policy
    return ToyPolicy(w, p.dim_x, p.max_len, p.temperature)


def grpo_loss_at(inst: GradCheckInstance, w: np.ndarray) -> float:
    lp_new = _with_weights(inst, w).token_logprobs(inst.x, inst.tokens)
    return token_grpo_loss(lp_new, inst.lp_old, inst.lp_ref, inst.mask, inst.advantages,
                           inst.clip_epsilon, inst.kl_beta).loss


def grpo_grad(inst: GradCheckInstance) -> np.ndarray:
    lp_new, logp, phi = inst.policy.forward(inst.x, inst.tokens)
    out = token_grpo_loss(lp_new, inst.lp_old, inst.lp_ref, inst.mask, inst.advantages,
                          inst.clip_epsilon, inst.kl_beta)
    return inst.policy.backward(inst.tokens, logp, phi, out.grad_logprob_new * inst.mask)


def sft_loss_at(inst: GradCheckInstance, w: np.ndarray) -> float:
    _, logp, _ = _with_weights(inst, w).forward(inst.x, inst.tokens)
    return sft_cross_entropy(inst.tokens.ravel(), logp.reshape(-1, len(VOCAB)), inst.mask.ravel())


def sft_grad(inst: GradCheckInstance) -> np.ndarray:
    _, logp, phi = inst.policy.forward(inst.x, inst.tokens)
    return inst.policy.backward(inst.tokens, logp, phi, -inst.mask / inst.mask.sum())


def central_difference(f, w: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(w)
    probe = w.copy()
    for idx in np.ndindex(w.shape):
        orig = probe[idx]
        probe[idx] = orig + h
        up = f(probe)
        probe[idx] = orig - h
        down = f(probe)
        probe[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def check_instance(inst: GradCheckInstance) -> tuple[float, float]:
    """Relative errors (grpo, sft) between analytic and finite-difference gradients."""
    w = inst.policy.weights
    e_grpo = relative_error(grpo_grad(inst), central_difference(lambda v: grpo_loss_at(inst, v), w))
    e_sft = relative_error(sft_grad(inst), central_difference(lambda v: sft_loss_at(inst, v), w))
    return e_grpo, e_sft
