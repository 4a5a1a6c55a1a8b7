import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fingereval.errors import AlignmentError, DivergenceDetected, GroupSizeMismatch, NonFiniteInput
from fingereval.grpo import (
    GrpoConfig,
    Reward,
    Rollout,
    RolloutGroup,
    SyntheticQaEnv,
    ToyPolicy,
    compute_reward,
    group_advantages,
    grpo_loss,
    kl_estimate,
    pretrained_base_policy,
    reward_accuracy,
    reward_format,
    sft_cross_entropy,
    token_grpo_loss,
    train_toy_grpo,
)
from fingereval.grpo import toy as toy_module
from fingereval.grpo.gradcheck import check_instance, random_instance
from fingereval.grpo.objective import pad
from fingereval.grpo.toy import VOCAB, TrainMode, encode
from fingereval.parse import Answer, Strictness, parse_tagged
from fingereval.scoring import GroundTruth
from oracles import grpo_loss_straight_line

YES = GroundTruth("q", Answer.YES)


# config


def test_default_config_values():
    c = GrpoConfig()
    assert (c.group_size, c.clip_epsilon, c.kl_beta, c.inner_iterations, c.learning_rate) == (16, 0.2, 0.04, 1, 5e-7)


@pytest.mark.parametrize("bad", [{"group_size": 1}, {"clip_epsilon": 0.0}, {"clip_epsilon": 1.0},
                                 {"kl_beta": -0.1}, {"inner_iterations": 0}, {"learning_rate": 0.0}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GrpoConfig(**bad)


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "grpo.config"
    GrpoConfig.toy(seed=3).dump(path)
    assert GrpoConfig.load(path) == GrpoConfig.toy(seed=3)
    path.write_text(json.dumps({"kl_beta": 0.1}))
    assert GrpoConfig.load(path, GrpoConfig.toy()).kl_beta == 0.1
    path.write_text(json.dumps({"beta": 0.1}))
    with pytest.raises(ValueError):
        GrpoConfig.load(path)


# rewards


def test_reward_examples():
    good = parse_tagged("<answer>Yes</answer><reason>the hand looks natural</reason>")
    assert reward_accuracy(good, YES) == 1.0 and reward_format(good) == 1.0
    wrong = parse_tagged("<answer>No</answer><reason>x</reason>")
    assert reward_accuracy(wrong, YES) == 0.0
    no_reason = parse_tagged("<answer>Yes</answer>")
    assert reward_format(no_reason) == 0.0 and reward_accuracy(no_reason, YES) == 0.0
    stray = "<answer>Yes</answer><reason>Yes it is</reason>"
    assert reward_format(parse_tagged(stray)) == 0.0
    # a lenient parse does not buy a format reward
    assert reward_format(parse_tagged(stray, Strictness.LENIENT)) == 0.0


@given(st.text(max_size=60) | st.sampled_from([
    "<answer>Yes</answer><reason>ok</reason>", "<answer>No</answer><reason>ok</reason>", "<answer>Yes</answer>"]))
def test_reward_bounds(raw):
    _, r = compute_reward(raw, YES)
    assert r.accuracy in (0.0, 1.0) and r.format in (0.0, 1.0)
    assert r.total in (0.0, 1.0, 2.0) and r.total == r.accuracy + r.format


# advantages


def test_advantage_examples():
    assert group_advantages([2.0] * 16).tolist() == [0.0] * 16
    assert group_advantages([2, 0]).tolist() == [1.0, -1.0]
    a = group_advantages([2, 1, 0, 1])
    assert np.allclose(a, [math.sqrt(2), 0, -math.sqrt(2), 0], rtol=0, atol=1e-15)
    with pytest.raises(GroupSizeMismatch):
        group_advantages([1, 2, 3], group_size=16)
    with pytest.raises(GroupSizeMismatch):
        group_advantages([])


@given(st.lists(st.floats(-10, 10), min_size=16, max_size=16))
def test_advantage_normalization(rewards):
    a = group_advantages(rewards, 16)
    r = np.array(rewards)
    if np.sqrt(np.mean((r - r.mean()) ** 2)) < 1e-8:
        assert not a.any()
    else:
        assert abs(a.sum()) <= 1e-9 * 16
        assert abs(a.mean()) <= 1e-9
        assert abs(np.sqrt(np.mean(a**2)) - 1) <= 1e-6


# KL


def test_kl_closed_forms():
    with mpmath.workdps(40):
        two = float(2 - mpmath.log(2) - 1)
        half = float(mpmath.mpf("0.5") - mpmath.log(mpmath.mpf("0.5")) - 1)
    assert abs(kl_estimate(math.log(2), 0.0) - two) <= 1e-12
    assert abs(kl_estimate(math.log(0.5), 0.0) - half) <= 1e-12
    assert abs(two - 0.306853) < 1e-6 and abs(half - 0.193147) < 1e-6
    assert kl_estimate(-4.2, -4.2) == 0.0
    with pytest.raises(NonFiniteInput):
        kl_estimate(math.nan, 0.0)
    with pytest.raises(NonFiniteInput):
        kl_estimate(0.0, -math.inf)


lp = st.floats(-30, 0)


@given(lp, lp)
def test_kl_nonnegative_and_zero_iff_equal(a, b):
    k = kl_estimate(a, b)
    assert k >= 0
    if a == b:
        assert k == 0
    elif abs(a - b) > 1e-7:
        assert k > 0


# loss


def make_group(rng, G=3, lengths=None, ratio_scale=0.1):
    lengths = lengths or [int(rng.integers(1, 7)) for _ in range(G)]
    outs = []
    for n in lengths:
        old = -rng.random(n) * 3
        outs.append(Rollout(old + rng.normal(0, ratio_scale, n), old, old + rng.normal(0, 0.3, n),
                            Reward(float(rng.integers(0, 2)), float(rng.integers(0, 2)))))
    return outs


def test_identity_policy_gives_zero_loss():
    rng = np.random.default_rng(0)
    outs = []
    for r in [2.0, 1.0, 0.0, 1.0]:
        x = -rng.random(5)
        outs.append(Rollout(x, x.copy(), x.copy(), Reward(r / 2, r / 2)))
    group = RolloutGroup.with_advantages("q", outs)
    res = grpo_loss(group, GrpoConfig(group_size=4))
    assert res.kl_term == 0.0 and abs(res.policy_term) <= 1e-15 and abs(res.loss) <= 1e-15


def test_clip_example():
    # ratio 1.5 with positive advantage: the clipped value 1.2 * Adv is used
    one = np.array([[math.log(1.5)]])
    res = token_grpo_loss(one, np.zeros((1, 1)), one, np.ones((1, 1)), np.array([1.0]), 0.2, 0.04)
    assert abs(res.policy_term + 1.2) <= 1e-15 and res.clip_fraction == 1.0
    assert res.grad_logprob_new[0, 0] == 0.0


def test_three_rollout_fixture_against_straight_line():
    rng = np.random.default_rng(7)
    for _ in range(20):
        outs = make_group(rng, G=3, ratio_scale=0.4)
        group = RolloutGroup.with_advantages("q", outs)
        cfg = GrpoConfig(group_size=3)
        got = grpo_loss(group, cfg).loss
        ref = grpo_loss_straight_line([o.logprob_new for o in outs], [o.logprob_old for o in outs],
                                      [o.logprob_ref for o in outs], [o.advantage for o in outs], 0.2, 0.04)
        assert abs(got - ref) <= 1e-10


def test_clip_inactive_equals_unclipped_formula():
    rng = np.random.default_rng(9)
    outs = make_group(rng, G=4, ratio_scale=0.02)
    group = RolloutGroup.with_advantages("q", outs)
    lp_new, mask = pad([o.logprob_new for o in outs])
    lp_old, _ = pad([o.logprob_old for o in outs])
    lp_ref, _ = pad([o.logprob_ref for o in outs])
    ratio = np.exp(np.where(mask > 0, lp_new - lp_old, 0.0))
    assert np.all(np.abs(ratio[mask > 0] - 1) < 0.2)
    adv = np.array([o.advantage for o in outs])[:, None]
    d = np.where(mask > 0, lp_ref - lp_new, 0.0)
    w = mask / mask.sum(axis=1, keepdims=True) / 4
    unclipped = -float(np.sum(ratio * adv * w)) + 0.04 * float(np.sum(np.maximum(np.expm1(d) - d, 0.0) * w))
    res = grpo_loss(group, GrpoConfig(group_size=4))
    assert res.loss == unclipped and res.clip_fraction == 0.0


def test_degenerate_group_has_no_policy_gradient():
    rng = np.random.default_rng(1)
    outs = make_group(rng, G=4, ratio_scale=0.5)
    for o in outs:
        o.reward = Reward(1.0, 1.0)
    group = RolloutGroup.with_advantages("q", outs)
    res = grpo_loss(group, GrpoConfig(group_size=4, kl_beta=0.0))
    assert res.policy_term == 0.0 and not res.grad_logprob_new.any()


def test_loss_errors():
    rng = np.random.default_rng(2)
    outs = make_group(rng, G=3)
    with pytest.raises(GroupSizeMismatch):
        grpo_loss(RolloutGroup("q", outs), GrpoConfig(group_size=4))
    outs[0].logprob_ref = outs[0].logprob_ref[:-1] if len(outs[0].logprob_ref) > 1 else np.zeros(3)
    with pytest.raises(AlignmentError):
        grpo_loss(RolloutGroup("q", outs), GrpoConfig(group_size=3))


def test_loss_gradient_wrt_logprobs_by_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n, T = 4, 6
        lp_old = -rng.random((n, T)) * 2
        lp_new = lp_old + rng.normal(0, 0.3, (n, T))
        lp_ref = lp_old + rng.normal(0, 0.3, (n, T))
        mask = (rng.random((n, T)) < 0.8).astype(float)
        mask[:, 0] = 1
        adv = rng.normal(size=n)
        ratio = np.exp(lp_new - lp_old)
        if np.min(np.abs(np.abs(ratio - 1) - 0.2)) < 1e-3:
            continue
        res = token_grpo_loss(lp_new, lp_old, lp_ref, mask, adv, 0.2, 0.04)
        h = 1e-6
        fd = np.zeros_like(lp_new)
        for idx in np.ndindex(lp_new.shape):
            up, down = lp_new.copy(), lp_new.copy()
            up[idx] += h
            down[idx] -= h
            fd[idx] = (token_grpo_loss(up, lp_old, lp_ref, mask, adv, 0.2, 0.04).loss
                       - token_grpo_loss(down, lp_old, lp_ref, mask, adv, 0.2, 0.04).loss) / (2 * h)
        assert np.linalg.norm(res.grad_logprob_new - fd) <= 1e-7 * max(1.0, np.linalg.norm(fd))


def test_policy_gradients_by_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(5):
        e_grpo, e_sft = check_instance(random_instance(rng))
        assert e_grpo <= 1e-5 and e_sft <= 1e-5


# SFT


def test_sft_examples():
    assert sft_cross_entropy([0, 1], np.log([[1.0, 1e-300], [1e-300, 1.0]])) == 0.0
    assert abs(sft_cross_entropy([0, 1, 1], np.log(np.full((3, 2), 0.5))) - math.log(2)) <= 1e-15
    # 3-token fixture: -(ln 0.7 + ln 0.2 + ln 0.5) / 3
    probs = np.array([[0.7, 0.2, 0.1], [0.3, 0.2, 0.5], [0.25, 0.25, 0.5]])
    expected = -(math.log(0.7) + math.log(0.2) + math.log(0.5)) / 3
    assert abs(sft_cross_entropy([0, 1, 2], np.log(probs)) - expected) <= 1e-15
    # answer-only target mask
    assert abs(sft_cross_entropy([0, 1, 2], np.log(probs), [1, 0, 0]) + math.log(0.7)) <= 1e-15
    with pytest.raises(AlignmentError):
        sft_cross_entropy([0, 1], np.log(probs))
    with pytest.raises(AlignmentError):
        sft_cross_entropy([0, 1, 2], np.log(probs), [0, 0, 0])


# toy policy and training


def test_policy_distribution_sums_to_one():
    rng = np.random.default_rng(0)
    p = ToyPolicy.init(3, rng, scale=1.0)
    tokens, mask, lps = p.sample(rng.normal(size=(5, 3)), rng)
    _, logp, _ = p.forward(rng.normal(size=(5, 3)), tokens)
    assert np.allclose(np.exp(logp).sum(axis=-1), 1.0)
    # sampled log-probs agree with teacher-forced ones
    x = rng.normal(size=(5, 3))
    rng2 = np.random.default_rng(1)
    tokens, mask, lps = p.sample(x, rng2)
    assert np.allclose(p.token_logprobs(x, tokens) * mask, lps)


def test_encode_and_render():
    toks, mask = encode(["<answer>", "Yes", "</answer>", "<reason>", " the", " scene", "</reason>"])
    assert mask.sum() == 8 and VOCAB[toks[7]] == "<eos>"
    text = ToyPolicy.render(toks[None], mask[None])[0]
    assert text == "<answer>Yes</answer><reason> the scene</reason>"
    assert compute_reward(text, YES)[1] == Reward(1.0, 1.0)


def test_env_is_deterministic_and_balanced():
    a, b = SyntheticQaEnv(seed=5), SyntheticQaEnv(seed=5)
    assert np.array_equal(a.features, b.features) and a.answers == b.answers
    share = np.mean([x is Answer.YES for x in a.answers])
    assert 0.3 < share < 0.7


def test_training_is_reproducible_and_logs_curve(tmp_path):
    env = SyntheticQaEnv(seed=1)
    cfg = GrpoConfig.toy(seed=1, sft_epochs=5)
    curves = [train_toy_grpo(env, pretrained_base_policy(env, 1, epochs=5), cfg, 15, TrainMode.COLD_START)
              for _ in range(2)]
    assert curves[0].rows == curves[1].rows
    assert curves[0].rows[0]["kl"] == 0.0  # reference is the policy as RL starts
    assert curves[0].sft_losses[-1] < curves[0].sft_losses[0]
    path = tmp_path / "curve.jsonl"
    curves[0].write_jsonl(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == 15 and set(rows[0]) == {"step", "mean_reward", "acc_rate", "fmt_rate", "kl", "loss"}


def test_divergence_detected(monkeypatch):
    env = SyntheticQaEnv(seed=0, n_questions=16)
    real = toy_module.token_grpo_loss

    def broken(*args, **kwargs):
        out = real(*args, **kwargs)
        out.loss = math.nan
        return out

    monkeypatch.setattr(toy_module, "token_grpo_loss", broken)
    with pytest.raises(DivergenceDetected):
        train_toy_grpo(env, pretrained_base_policy(env, 0, epochs=2), GrpoConfig.toy(), 3, TrainMode.ZERO)


def test_short_cold_start_run_improves_reward():
    env = SyntheticQaEnv(seed=0)
    cfg = GrpoConfig.toy()
    curve = train_toy_grpo(env, pretrained_base_policy(env, 0), cfg, 150, TrainMode.COLD_START)
    r = curve.series("mean_reward")
    assert r[-30:].mean() > r[:30].mean() or r[:30].mean() > 1.9
    assert curve.series("fmt_rate")[-30:].mean() > 0.9
