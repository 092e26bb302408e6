"""Shared fixtures: desk-scale cities and cached trained models.

Training fixtures are deterministic in their config, so checkpoints are
cached on disk (tests/.cache) keyed by a config hash; delete the cache
directory to force retraining.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from amodkit import City
from amodkit.agent import A2CConfig, ActorCritic, TrainingMode, meta_train, train_standard

CACHE_DIR = Path(__file__).parent / ".cache"


def build_city(city_id: str, n: int, fleet: int, demand: np.ndarray,
               margin: np.ndarray, travel: np.ndarray, episode_length: int = 20,
               cost_per_step: float = 0.5) -> City:
    """City from per-OD demand rates, margins and travel times (steps)."""
    t_len = episode_length
    adjacency = np.ones((n, n), dtype=bool)
    tt = np.repeat(travel[:, :, None].astype(np.int64), t_len, axis=2)
    cost = cost_per_step * tt.astype(float)
    price = np.maximum(cost + margin[:, :, None], 0.0)
    rate = np.repeat(demand[:, :, None].astype(float), t_len, axis=2)
    return City(id=city_id, num_stations=n, adjacency=adjacency, travel_time=tt,
                price=price, cost=cost, demand_rate=rate, fleet_size=fleet,
                episode_length=t_len, step_minutes=15.0)


def hotspot_city(city_id: str, n: int = 6, fleet: int = 10, rate: float = 4.0,
                 hot=(0, 1), margin_hot: float = 3.0, margin_bg: float = 0.8,
                 episode_length: int = 20, travel_steps: int = 2,
                 seed: int = 0) -> City:
    """A task where most demand leaves a few hot origin stations.

    Serving drains vehicles toward the other stations, so profit hinges on
    repositioning idle vehicles back to the hot origins.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1, n, fleet]))
    demand = np.zeros((n, n))
    others = [i for i in range(n) if i not in hot]
    for o in hot:
        w = rng.dirichlet(np.ones(len(others)))
        demand[o, others] = w * rate / len(hot)
    demand += rng.uniform(0.0, 0.02, size=(n, n))
    np.fill_diagonal(demand, 0.0)
    margin = np.full((n, n), margin_bg)
    for o in hot:
        margin[o, :] = margin_hot * rng.uniform(0.8, 1.2, size=n)
    travel = rng.integers(1, travel_steps + 1, size=(n, n))
    travel = np.minimum(travel, travel.T)
    np.fill_diagonal(travel, 1)
    return build_city(city_id, n, fleet, demand, margin, travel,
                      episode_length=episode_length)


@pytest.fixture(scope="session")
def desk_city() -> City:
    """The fixed 6-station learning fixture used across the suite."""
    return hotspot_city("desk6", n=6, fleet=10, rate=4.0, hot=(0, 1), seed=7)


@pytest.fixture(scope="session")
def meta_pool() -> list[City]:
    """Eight related tasks: hot stations and scales move between tasks."""
    pool = []
    for k in range(8):
        n = 5 + (k % 3)
        hot = ((k * 2) % n, (k * 2 + 3) % n)
        if hot[0] == hot[1]:
            hot = (hot[0], (hot[0] + 1) % n)
        pool.append(hotspot_city(f"pool-{k}", n=n, fleet=9 + (k % 4),
                                 rate=3.5 + 0.5 * (k % 3), hot=hot, seed=100 + k))
    return pool


@pytest.fixture(scope="session")
def heldout_tasks() -> list[City]:
    return [
        hotspot_city("held-0", n=6, fleet=11, rate=4.0, hot=(2, 5), seed=500),
        hotspot_city("held-1", n=7, fleet=10, rate=3.8, hot=(4, 0), seed=501),
    ]


# ---------------------------------------------------------------------------
# Cached training


def _cache_key(kind: str, spec: dict) -> Path:
    digest = hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:16]
    return CACHE_DIR / f"{kind}-{digest}.bin"


def cached_train_standard(mode: TrainingMode, tasks, episodes: int, seed: int,
                          config: A2CConfig) -> ActorCritic:
    spec = {"mode": mode.value, "tasks": [c.id for c in tasks], "episodes": episodes,
            "seed": seed, "hidden": config.hidden_size, "horizon": config.horizon,
            "lr": config.learning_rate}
    path = _cache_key("std", spec)
    if path.exists():
        model, _meta = ActorCritic.load(path)
        return model
    model, _rows = train_standard(mode, tasks, episodes, seed, config=config)
    CACHE_DIR.mkdir(exist_ok=True)
    model.save(path, extra_meta={"horizon": config.horizon})
    return model


def cached_meta_train(tasks, trials: int, episodes_per_trial: int, seed: int,
                      config: A2CConfig) -> ActorCritic:
    spec = {"tasks": [c.id for c in tasks], "trials": trials,
            "n": episodes_per_trial, "seed": seed, "hidden": config.hidden_size,
            "horizon": config.horizon, "lr": config.learning_rate}
    path = _cache_key("meta", spec)
    if path.exists():
        model, _meta = ActorCritic.load(path)
        return model
    model, _rows = meta_train(tasks, trials, episodes_per_trial, seed, config=config)
    CACHE_DIR.mkdir(exist_ok=True)
    model.save(path, extra_meta={"horizon": config.horizon})
    return model
