"""Policies and training loops for the rebalancing agent."""

from .model import ActorCritic, HiddenBank, observation_feature_dim
from .policies import (EqualDistributionPolicy, MpcPolicy, NeuralPolicy,
                       RandomPolicy, baseline_policy)
from .training import (A2CConfig, RewardScale, RolloutBuffer, TrainingMode,
                       a2c_update, discounted_returns, fine_tune, meta_train,
                       train_standard)

__all__ = [
    "ActorCritic", "HiddenBank", "observation_feature_dim",
    "EqualDistributionPolicy", "MpcPolicy", "NeuralPolicy", "RandomPolicy",
    "baseline_policy",
    "A2CConfig", "RewardScale", "RolloutBuffer", "TrainingMode", "a2c_update",
    "discounted_returns", "fine_tune", "meta_train", "train_standard",
]
