"""Recurrent graph-network actor-critic.

Two symmetrical towers with no shared parameters. Each tower encodes the
per-station features with one ReLU affine layer, updates a per-station
GRU hidden state, pools updated embeddings into each receiver by summing
over the directed adjacency (self-loops included), and decodes the
concatenation [pooled, own embedding]. The actor emits Dirichlet
concentrations through a floored Softplus; the critic sum-pools its
per-station outputs into one value estimate.

All maps are per-station, so one parameter set runs on any city size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Observation
from ..neural import (Affine, GruCell, Tensor, add, concat, load_checkpoint,
                      matmul, relu, reshape, save_checkpoint, softplus, tensor,
                      tensor_sum)
from ..neural.checkpoint import CheckpointError

__all__ = ["ActorCritic", "HiddenBank", "observation_feature_dim"]

DEFAULT_HIDDEN = 256
ALPHA_FLOOR = 1e-3


def observation_feature_dim(horizon: int) -> int:
    return horizon + 10


@dataclass
class HiddenBank:
    """Per-station GRU states for both towers; owned by a single trial."""

    actor: Tensor
    critic: Tensor

    @property
    def num_stations(self) -> int:
        return self.actor.values.shape[0]

    def detach(self) -> "HiddenBank":
        """Drop graph history; values carry over (used at episode boundaries)."""
        return HiddenBank(actor=self.actor.detach(), critic=self.critic.detach())


class _Tower:
    def __init__(self, rng: np.random.Generator, feature_dim: int, hidden: int):
        self.encoder = Affine(rng, feature_dim, hidden)
        self.gru = GruCell(rng, hidden, hidden)
        self.decoder = Affine(rng, 2 * hidden, 1)

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.gru.parameters() + self.decoder.parameters()

    def __call__(self, x: Tensor, adj_t: Tensor, h: Tensor) -> tuple[Tensor, Tensor]:
        emb = relu(self.encoder(x))
        h_next = self.gru(emb, h)
        pooled = matmul(adj_t, h_next)      # receiver i sums senders j with edge j->i
        out = self.decoder(concat(pooled, h_next, axis=1))
        return out, h_next


class ActorCritic:
    def __init__(self, feature_dim: int, hidden_size: int = DEFAULT_HIDDEN,
                 seed: int = 0, alpha_floor: float = ALPHA_FLOOR):
        self.feature_dim = feature_dim
        self.hidden_size = hidden_size
        self.alpha_floor = alpha_floor
        self.init_seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC]))
        self.actor = _Tower(rng, feature_dim, hidden_size)
        self.critic = _Tower(rng, feature_dim, hidden_size)

    # -- parameters ----------------------------------------------------------

    def actor_parameters(self) -> list[Tensor]:
        return self.actor.parameters()

    def critic_parameters(self) -> list[Tensor]:
        return self.critic.parameters()

    def parameters(self) -> list[Tensor]:
        return self.actor_parameters() + self.critic_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for tower_name, tower in (("actor", self.actor), ("critic", self.critic)):
            for layer_name, layer in (("encoder", tower.encoder), ("decoder", tower.decoder)):
                out[f"{tower_name}.{layer_name}.weight"] = layer.weight
                out[f"{tower_name}.{layer_name}.bias"] = layer.bias
            out[f"{tower_name}.gru.w_input"] = tower.gru.w_input
            out[f"{tower_name}.gru.w_hidden"] = tower.gru.w_hidden
            out[f"{tower_name}.gru.bias"] = tower.gru.bias
        return out

    def clone(self) -> "ActorCritic":
        other = ActorCritic(self.feature_dim, self.hidden_size,
                            seed=self.init_seed, alpha_floor=self.alpha_floor)
        for name, p in other.named_parameters().items():
            p.values[...] = self.named_parameters()[name].values
        return other

    # -- forward -------------------------------------------------------------

    def zero_bank(self, num_stations: int) -> HiddenBank:
        shape = (num_stations, self.hidden_size)
        return HiddenBank(actor=tensor(np.zeros(shape)), critic=tensor(np.zeros(shape)))

    def _inputs(self, obs: Observation) -> np.ndarray:
        """City-scale normalization; raw features stay raw in the Observation."""
        f = obs.features.copy()
        h = f.shape[1] - 10
        fleet = float(max(obs.fleet_size, 1))
        f[:, 0:h + 4] /= fleet                      # idle, projections, demand sums
        f[:, h + 4:h + 6] /= max(obs.price_scale, 1e-9)
        f[:, h + 7] /= max(obs.profit_scale, 1e-9)  # previous reward
        return f

    def forward(self, obs: Observation, bank: HiddenBank) -> tuple[Tensor, Tensor, HiddenBank]:
        """One step for both towers; the input bank is not mutated."""
        n = obs.num_stations
        if bank.num_stations != n:
            raise ValueError(f"hidden bank built for {bank.num_stations} stations, city has {n}")
        if obs.features.shape[1] != self.feature_dim:
            raise ValueError(
                f"observation width {obs.features.shape[1]} != encoder width {self.feature_dim}")
        x = tensor(self._inputs(obs))
        adj_t = tensor(obs.adjacency.T.copy())
        a_out, a_hidden = self.actor(x, adj_t, bank.actor)
        alpha = add(softplus(reshape(a_out, (n,))), tensor(np.full(n, self.alpha_floor)))
        c_out, c_hidden = self.critic(x, adj_t, bank.critic)
        value = tensor_sum(c_out)
        return alpha, value, HiddenBank(actor=a_hidden, critic=c_hidden)

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "feature_dim": self.feature_dim,
            "hidden_size": self.hidden_size,
            "alpha_floor": self.alpha_floor,
            "init_seed": self.init_seed,
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, {k: v.values for k, v in self.named_parameters().items()}, meta)

    @classmethod
    def load(cls, path) -> tuple["ActorCritic", dict]:
        tensors, meta = load_checkpoint(path)
        for key in ("feature_dim", "hidden_size"):
            if key not in meta:
                raise CheckpointError(f"checkpoint manifest lacks {key}")
        model = cls(int(meta["feature_dim"]), int(meta["hidden_size"]),
                    seed=int(meta.get("init_seed", 0)),
                    alpha_floor=float(meta.get("alpha_floor", ALPHA_FLOOR)))
        params = model.named_parameters()
        for name, p in params.items():
            if name not in tensors:
                raise CheckpointError(f"checkpoint lacks tensor {name}")
            if tensors[name].shape != p.values.shape:
                raise CheckpointError(f"shape mismatch for {name}")
            p.values[...] = tensors[name]
        return model, meta
