"""A2C training: single-city, multi-city sampling, and the trial-based
meta-learning loop that carries GRU state across episodes of one task.

Updates default to once per episode on that episode's buffer; the
trial-level objective is pursued through the carried hidden state. The
alternative (returns flowing across episode boundaries, one update per
trial) sits behind the trial_level_returns flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..env import RebalanceEnv, derive_seed, run_episode
from ..errors import InvariantViolation
from ..neural import (Adam, Tensor, add, backward, clip_global_norm,
                      dirichlet_entropy, mul, sub, tensor, zero_grads)
from .model import ActorCritic, observation_feature_dim
from .policies import NeuralPolicy

__all__ = ["A2CConfig", "RolloutBuffer", "RewardScale", "TrainingMode",
           "a2c_update", "discounted_returns", "fine_tune", "meta_train",
           "train_standard"]

_TASK_RNG_TAG = 0x7A5C


class TrainingMode(Enum):
    SINGLE_CITY = "single_city"
    MULTI_CITY_ZERO_SHOT = "zero_shot"
    FINE_TUNE = "fine_tune"
    META_RL = "meta_rl"


@dataclass
class A2CConfig:
    hidden_size: int = 256
    horizon: int = 6
    learning_rate: float = 3e-4
    gamma: float = 0.97
    grad_clip: float = 10.0
    entropy_coef: float = 0.0          # not a reported setting; off by default
    trial_level_returns: bool = False
    placement: str = "uniform"

    @property
    def feature_dim(self) -> int:
        return observation_feature_dim(self.horizon)


@dataclass
class RolloutBuffer:
    """Per-step records of one or more episodes; rewards are raw currency."""

    log_probs: list[Tensor] = field(default_factory=list)
    values: list[Tensor] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    alphas: list[Tensor] = field(default_factory=list)

    def extend(self, log_probs, values, rewards, dones, alphas) -> None:
        self.log_probs += list(log_probs)
        self.values += list(values)
        self.rewards += list(rewards)
        self.dones += list(dones)
        self.alphas += list(alphas)

    def __len__(self) -> int:
        return len(self.rewards)


class RewardScale:
    """Running mean of |episode reward| per city, for update normalization."""

    def __init__(self):
        self._count: dict[str, int] = {}
        self._mean: dict[str, float] = {}

    def update(self, city_id: str, episode_reward: float) -> None:
        n = self._count.get(city_id, 0) + 1
        mean = self._mean.get(city_id, 0.0)
        self._count[city_id] = n
        self._mean[city_id] = mean + (abs(episode_reward) - mean) / n

    def scale(self, city_id: str) -> float:
        return max(self._mean.get(city_id, 1.0), 1e-8)


def discounted_returns(rewards, dones, gamma: float, reset_at_done: bool = True,
                       scale: float = 1.0) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if dones[t] and reset_at_done:
            acc = 0.0
        acc = rewards[t] / scale + gamma * acc
        out[t] = acc
    return out


def a2c_update(buffer: RolloutBuffer, model: ActorCritic, actor_opt: Adam,
               critic_opt: Adam, config: A2CConfig,
               reward_scale: float = 1.0) -> tuple[float, float]:
    """One gradient step on each tower from the buffered rollout.

    Advantages are treated as constants (no gradient through the critic
    in the policy term); the value loss is the sum of squared return
    errors. Returns the (policy, value) loss values.
    """
    if len(buffer) == 0:
        raise ValueError("empty rollout buffer")
    if len(buffer.log_probs) != len(buffer) or len(buffer.values) != len(buffer):
        raise ValueError("buffer record lengths are inconsistent")
    returns = discounted_returns(buffer.rewards, buffer.dones, config.gamma,
                                 reset_at_done=not config.trial_level_returns,
                                 scale=reward_scale)
    values = np.array([v.item() for v in buffer.values])
    advantages = returns - values

    policy_loss = None
    value_loss = None
    for t, (logp, v) in enumerate(zip(buffer.log_probs, buffer.values)):
        p_term = mul(logp, tensor(-advantages[t]))
        err = sub(tensor(returns[t]), v)
        v_term = mul(err, err)
        policy_loss = p_term if policy_loss is None else add(policy_loss, p_term)
        value_loss = v_term if value_loss is None else add(value_loss, v_term)
    if config.entropy_coef > 0.0:
        for alpha in buffer.alphas:
            policy_loss = sub(policy_loss, mul(dirichlet_entropy(alpha),
                                               tensor(config.entropy_coef)))

    zero_grads(actor_opt.params)
    zero_grads(critic_opt.params)
    backward(add(policy_loss, value_loss))
    clip_global_norm(actor_opt.params, config.grad_clip)
    clip_global_norm(critic_opt.params, config.grad_clip)
    actor_opt.step()
    critic_opt.step()
    return policy_loss.item(), value_loss.item()


def _rollout(policy: NeuralPolicy, city, ep_seed: int, carry, config: A2CConfig):
    """One recorded episode; returns (trajectory, episode buffer slice, carry)."""
    policy.clear_records()
    traj = run_episode(policy, city, ep_seed, carry=carry,
                       placement=config.placement, horizon=config.horizon)
    dones = [False] * (len(traj.rewards) - 1) + [True]
    carry_next = (traj.actions[-1], traj.rewards[-1], 1.0)
    return traj, dones, carry_next


def _new_model(config: A2CConfig, seed: int) -> ActorCritic:
    return ActorCritic(config.feature_dim, config.hidden_size, seed=seed)


def meta_train(task_pool, trials: int, episodes_per_trial: int, seed: int,
               config: A2CConfig | None = None, model: ActorCritic | None = None,
               on_episode_start=None):
    """Trial-based meta-training over the task pool.

    Per trial: draw a task uniformly, zero the hidden bank, then run
    episodes_per_trial consecutive episodes carrying hidden state and the
    (action, reward, done) inputs across boundaries, updating after each
    episode. on_episode_start(trial, episode, bank) is an instrumentation
    hook. Returns (model, per-trial log rows).
    """
    if not task_pool:
        raise ValueError("task pool is empty")
    if episodes_per_trial < 1:
        raise ValueError("need at least one episode per trial")
    config = config or A2CConfig()
    model = model or _new_model(config, seed)
    actor_opt = Adam(model.actor_parameters(), lr=config.learning_rate)
    critic_opt = Adam(model.critic_parameters(), lr=config.learning_rate)
    policy = NeuralPolicy(model, stochastic=True, record=True, carry_hidden=True)
    scaler = RewardScale()
    task_rng = np.random.default_rng(derive_seed(seed, _TASK_RNG_TAG))
    log_rows = []

    for trial in range(trials):
        city = task_pool[int(task_rng.integers(len(task_pool)))]
        policy.reset_hidden(city.num_stations)
        carry = None
        trial_buffer = RolloutBuffer() if config.trial_level_returns else None
        rewards, p_losses, v_losses = [], [], []
        for ep in range(episodes_per_trial):
            if on_episode_start is not None:
                on_episode_start(trial, ep, policy.bank)
            ep_seed = derive_seed(seed, trial, ep)
            traj, dones, carry = _rollout(policy, city, ep_seed, carry, config)
            scaler.update(city.id, traj.total_reward)
            rewards.append(traj.total_reward)
            if config.trial_level_returns:
                trial_buffer.extend(policy.log_probs, policy.values,
                                    traj.rewards, dones, policy.alphas)
            else:
                buf = RolloutBuffer(list(policy.log_probs), list(policy.values),
                                    list(traj.rewards), dones, list(policy.alphas))
                pl, vl = a2c_update(buf, model, actor_opt, critic_opt, config,
                                    reward_scale=scaler.scale(city.id))
                p_losses.append(pl)
                v_losses.append(vl)
                policy.detach_hidden()
        if config.trial_level_returns:
            pl, vl = a2c_update(trial_buffer, model, actor_opt, critic_opt, config,
                                reward_scale=scaler.scale(city.id))
            p_losses.append(pl)
            v_losses.append(vl)
            policy.detach_hidden()
        log_rows.append({
            "trial": trial,
            "task_id": city.id,
            "episodes": episodes_per_trial,
            "mean_reward": float(np.mean(rewards)),
            "final_episode_reward": rewards[-1],
            "policy_loss": float(np.mean(p_losses)),
            "value_loss": float(np.mean(v_losses)),
        })
    return model, log_rows


def train_standard(mode: TrainingMode, tasks, episodes: int, seed: int,
                   config: A2CConfig | None = None, model: ActorCritic | None = None):
    """Episode-based training without trial structure (hidden state zeroed
    per episode). SINGLE_CITY takes exactly one task; zero-shot draws a
    task uniformly per episode. Returns (model, per-episode log rows)."""
    if mode is TrainingMode.META_RL:
        raise ValueError("use meta_train for trial-based training")
    if mode is TrainingMode.SINGLE_CITY and len(tasks) != 1:
        raise ValueError("single-city training takes exactly one task")
    if mode in (TrainingMode.MULTI_CITY_ZERO_SHOT, TrainingMode.FINE_TUNE) and not tasks:
        raise ValueError("multi-city training needs a nonempty task pool")
    config = config or A2CConfig()
    model = model or _new_model(config, seed)
    actor_opt = Adam(model.actor_parameters(), lr=config.learning_rate)
    critic_opt = Adam(model.critic_parameters(), lr=config.learning_rate)
    policy = NeuralPolicy(model, stochastic=True, record=True, carry_hidden=False)
    scaler = RewardScale()
    task_rng = np.random.default_rng(derive_seed(seed, _TASK_RNG_TAG))
    log_rows = []

    for episode in range(episodes):
        if mode is TrainingMode.SINGLE_CITY:
            city = tasks[0]
        else:
            city = tasks[int(task_rng.integers(len(tasks)))]
        ep_seed = derive_seed(seed, episode)
        traj, dones, _carry = _rollout(policy, city, ep_seed, None, config)
        scaler.update(city.id, traj.total_reward)
        buf = RolloutBuffer(list(policy.log_probs), list(policy.values),
                            list(traj.rewards), dones, list(policy.alphas))
        pl, vl = a2c_update(buf, model, actor_opt, critic_opt, config,
                            reward_scale=scaler.scale(city.id))
        log_rows.append({
            "episode": episode,
            "task_id": city.id,
            "reward": traj.total_reward,
            "served": traj.served,
            "reb_cost": traj.rebalancing_cost,
            "policy_loss": pl,
            "value_loss": vl,
        })
    return model, log_rows


def fine_tune(model: ActorCritic, city, n_episodes: int = 10, seed: int = 0,
              config: A2CConfig | None = None) -> ActorCritic:
    """Adapt a copy of pretrained parameters with one update per episode.

    The input model is untouched; exactly n_episodes optimizer steps run
    on each tower.
    """
    if n_episodes < 1:
        raise ValueError("fine-tuning needs at least one episode")
    config = config or A2CConfig()
    adapted = model.clone()
    tuned, _rows = train_standard(TrainingMode.FINE_TUNE, [city], n_episodes, seed,
                                  config=config, model=adapted)
    return tuned
