"""Rebalancing policies: heuristics, the neural agent, and MPC adapters.

A policy is a callable obs -> action; the episode driver additionally
calls begin_episode(env, seed) when present, which is how controllers
get at the simulator state and how stochastic policies seed their draws.
"""

from __future__ import annotations

import numpy as np

from ..env import FlowAction, Observation, derive_seed
from ..flowopt import DEFAULT_MPC_HORIZON, solve_mpc_forecast, solve_mpc_oracle
from ..neural import Tensor, dirichlet_log_prob, dirichlet_mean, dirichlet_sample
from .model import ActorCritic, HiddenBank

__all__ = ["RandomPolicy", "EqualDistributionPolicy", "NeuralPolicy",
           "MpcPolicy", "baseline_policy"]

_ACTION_RNG_TAG = 0xA5D1


class RandomPolicy:
    """Uniform Dirichlet draws: the lower bound of the framework."""

    def __init__(self):
        self._rng = np.random.default_rng(0)

    def begin_episode(self, env, seed: int) -> None:
        self._rng = np.random.default_rng(derive_seed(seed, _ACTION_RNG_TAG))

    def __call__(self, obs: Observation) -> np.ndarray:
        return dirichlet_sample(np.ones(obs.num_stations), self._rng)


class EqualDistributionPolicy:
    """Always target an equal share of idle vehicles everywhere."""

    def __call__(self, obs: Observation) -> np.ndarray:
        n = obs.num_stations
        return np.full(n, 1.0 / n)


def baseline_policy(kind: str):
    kind = kind.lower()
    if kind == "random":
        return RandomPolicy()
    if kind == "ed":
        return EqualDistributionPolicy()
    raise ValueError(f"unknown baseline {kind!r} (expected 'random' or 'ed')")


class NeuralPolicy:
    """Wraps an ActorCritic for rollouts.

    carry_hidden=False resets the GRU bank at every episode start (the
    standard single-episode protocol); carry_hidden=True leaves lifecycle
    control to the caller, which is how trials thread hidden state across
    episodes. With record=True the step log-probs/values/concentrations
    stay attached to the graph for a later update.
    """

    def __init__(self, model: ActorCritic, stochastic: bool = True,
                 record: bool = False, carry_hidden: bool = False):
        self.model = model
        self.stochastic = stochastic
        self.record = record
        self.carry_hidden = carry_hidden
        self.bank: HiddenBank | None = None
        self._rng = np.random.default_rng(0)
        self.log_probs: list[Tensor] = []
        self.values: list[Tensor] = []
        self.alphas: list[Tensor] = []

    def reset_hidden(self, num_stations: int) -> None:
        self.bank = self.model.zero_bank(num_stations)

    def detach_hidden(self) -> None:
        if self.bank is not None:
            self.bank = self.bank.detach()

    def clear_records(self) -> None:
        self.log_probs, self.values, self.alphas = [], [], []

    def begin_episode(self, env, seed: int) -> None:
        self._rng = np.random.default_rng(derive_seed(seed, _ACTION_RNG_TAG))
        n = env.city.num_stations
        if not self.carry_hidden or self.bank is None or self.bank.num_stations != n:
            self.reset_hidden(n)

    def __call__(self, obs: Observation) -> np.ndarray:
        alpha, value, self.bank = self.model.forward(obs, self.bank)
        if self.stochastic:
            action = dirichlet_sample(alpha.values, self._rng)
        else:
            action = dirichlet_mean(alpha.values)
        if self.record:
            self.log_probs.append(dirichlet_log_prob(alpha, action))
            self.values.append(value)
            self.alphas.append(alpha)
        return action


class MpcPolicy:
    """Receding-horizon controller: replans every step, executes step 0.

    kind='oracle' plans against the exact demand realization (the
    simulator exposes it as a pure function of the episode seed);
    kind='forecast' plans against the Poisson rates.
    """

    def __init__(self, kind: str = "oracle", horizon: int = DEFAULT_MPC_HORIZON):
        if kind not in ("oracle", "forecast"):
            raise ValueError(f"unknown MPC kind {kind!r}")
        if horizon < 1:
            raise ValueError("MPC horizon must be >= 1")
        self.kind = kind
        self.horizon = horizon
        self._env = None

    def begin_episode(self, env, seed: int) -> None:
        self._env = env

    def __call__(self, obs: Observation) -> FlowAction:
        if self._env is None:
            raise RuntimeError("MpcPolicy needs begin_episode(env, seed) before acting")
        env = self._env
        state = env.state
        if self.kind == "oracle":
            future = np.stack([env.realized_demand(state.clock + k)
                               for k in range(self.horizon)])
            plan = solve_mpc_oracle(env.city, state, self.horizon, future)
        else:
            plan = solve_mpc_forecast(env.city, state, self.horizon)
        return FlowAction(flows=plan.first_step)
