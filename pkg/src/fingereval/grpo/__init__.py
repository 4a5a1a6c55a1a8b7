from fingereval.grpo.config import GrpoConfig
from fingereval.grpo.objective import (
    LossBreakdown,
    Rollout,
    RolloutGroup,
    group_advantages,
    grpo_loss,
    kl_estimate,
    sft_cross_entropy,
    token_grpo_loss,
)
from fingereval.grpo.rewards import Reward, compute_reward, reward_accuracy, reward_format
from fingereval.grpo.toy import (
    SyntheticQaEnv,
    ToyPolicy,
    TrainingCurve,
    TrainMode,
    pretrained_base_policy,
    train_toy_grpo,
)

__all__ = [
    "GrpoConfig", "LossBreakdown", "Rollout", "RolloutGroup", "group_advantages", "grpo_loss",
    "kl_estimate", "sft_cross_entropy", "token_grpo_loss", "Reward", "compute_reward",
    "reward_accuracy", "reward_format", "SyntheticQaEnv", "ToyPolicy", "TrainingCurve",
    "TrainMode", "pretrained_base_policy", "train_toy_grpo",
]
