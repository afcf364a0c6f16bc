"""Actuation-sequence optimization: slot environment and policy-gradient learner."""

from .env import (EnvSpec, FUEL_PRESET, RewardWeights, SPEED_PRESET,
                  SequenceEnv, WEIGHT_PRESETS)
from .nets import (Adam, clip_global_norm, global_norm, mlp_backward,
                   mlp_forward, mlp_init, one_hot, one_hot_batch, orthogonal)
from .ppo import (CHECKPOINT_FORMAT, EpisodeRecord, LOG_HEADER, PPOHyperParams,
                  PolicyParams, TrainingLog, Transition, clipped_surrogate,
                  compute_gae, extract_sequence, gaussian_log_prob, init_policy,
                  load_policy, loss_and_grads, normalize_advantages,
                  policy_mean, policy_sample, ppo_update, save_policy, train,
                  value_estimate)

__all__ = [
    "Adam", "CHECKPOINT_FORMAT", "EnvSpec", "EpisodeRecord", "FUEL_PRESET",
    "LOG_HEADER", "PPOHyperParams", "PolicyParams", "RewardWeights",
    "SPEED_PRESET", "SequenceEnv", "TrainingLog", "Transition",
    "WEIGHT_PRESETS", "clip_global_norm", "clipped_surrogate", "compute_gae",
    "extract_sequence", "gaussian_log_prob", "global_norm", "init_policy",
    "load_policy", "loss_and_grads", "mlp_backward", "mlp_forward", "mlp_init",
    "normalize_advantages", "one_hot", "one_hot_batch", "orthogonal",
    "policy_mean", "policy_sample", "ppo_update", "save_policy", "train",
    "value_estimate",
]
