"""City tasks: definition, validation, synthetic generation, demand sampling, disturbances.

A City is one task for the fleet controller: a station graph with per-OD,
per-step travel times, prices, operating costs and Poisson demand rates,
plus a fleet size and an episode length. Cities are immutable after
construction and safe to share across concurrent rollouts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ScenarioError

__all__ = [
    "City",
    "Disturbance",
    "DisturbanceKind",
    "SynthCityParams",
    "apply_disturbance",
    "generate_synthetic_city",
    "load_disturbances",
    "load_scenario",
    "sample_demand",
    "save_scenario",
    "validate_city",
]


@dataclass(frozen=True)
class City:
    """Immutable description of one transportation network / task.

    All OD quantities are dense arrays of shape (N, N, T): integer travel
    times (steps), trip prices, trip costs and Poisson demand rates per
    time step. The adjacency matrix only shapes information flow in the
    graph-network policies; trips and rebalancing moves are allowed
    between any pair of stations.
    """

    id: str
    num_stations: int
    adjacency: np.ndarray          # (N, N) bool
    travel_time: np.ndarray        # (N, N, T) int64, >= 1
    price: np.ndarray              # (N, N, T) float64, >= 0
    cost: np.ndarray               # (N, N, T) float64, >= 0
    demand_rate: np.ndarray        # (N, N, T) float64, >= 0
    fleet_size: int
    episode_length: int
    step_minutes: float = 15.0

    def __post_init__(self):
        # Own, normalize and freeze the array fields.
        object.__setattr__(self, "adjacency", np.array(self.adjacency, dtype=bool))
        object.__setattr__(self, "travel_time", np.array(self.travel_time, dtype=np.int64))
        for name in ("price", "cost", "demand_rate"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=np.float64))
        for name in ("adjacency", "travel_time", "price", "cost", "demand_rate"):
            getattr(self, name).setflags(write=False)
        validate_city(self)

    def margin(self, t: int) -> np.ndarray:
        """Per-OD profit p - c at step t."""
        return self.price[:, :, t] - self.cost[:, :, t]


class DisturbanceKind(str, Enum):
    SPECIAL_EVENT = "special_event"
    PRICE_CHANGE = "price_change"
    CONGESTION = "congestion"


@dataclass(frozen=True)
class Disturbance:
    """A localized, time-windowed perturbation of a city.

    `multiplier` scales the targeted quantity (demand rates, prices or
    inbound travel times depending on `kind`); for special events,
    `background_multiplier` scales demand everywhere else inside the
    window (1.0 leaves it untouched). The window is half-open [start, end).
    """

    kind: DisturbanceKind
    target_stations: tuple[int, ...]
    multiplier: float
    window: tuple[int, int]
    background_multiplier: float = 1.0

    def __post_init__(self):
        if not self.target_stations:
            raise ScenarioError("disturbance has an empty target set")
        if self.multiplier <= 0 or self.background_multiplier <= 0:
            raise ScenarioError("disturbance multipliers must be positive")
        t0, t1 = self.window
        if t0 < 0 or t1 < t0:
            raise ScenarioError(f"invalid disturbance window {self.window}")


@dataclass(frozen=True)
class SynthCityParams:
    """Ranges for the synthetic task distribution.

    Defaults bracket the statistics of the real scenarios the approach
    was evaluated on: 10-23 stations, average trips of 6-22 minutes,
    fleets of 79-2729 vehicles. Desk-scale fixtures pass smaller ranges.
    """

    node_range: tuple[int, int] = (10, 23)
    trip_time_steps: tuple[int, int] = (1, 5)
    demand_per_hour: tuple[float, float] = (177.0, 11446.0)
    fleet_range: tuple[int, int] = (79, 2729)
    episode_length: int = 20
    step_minutes: float = 15.0
    cost_per_step: float = 0.5        # c = cost_per_step * travel_time
    margin_range: tuple[float, float] = (-0.25, 1.0)   # p = c * (1 + margin)
    profitable_fraction: float = 0.8
    edge_prob: float = 0.35
    hotspot_range: tuple[int, int] = (1, 3)
    hotspot_boost: float = 4.0

    def __post_init__(self):
        for name in ("node_range", "trip_time_steps", "demand_per_hour",
                     "fleet_range", "margin_range", "hotspot_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ScenarioError(f"degenerate range {name}: {lo} > {hi}")
        if self.node_range[0] < 2:
            raise ScenarioError("need at least 2 stations")
        if not 0.0 <= self.profitable_fraction <= 1.0:
            raise ScenarioError("profitable_fraction must be in [0, 1]")


def validate_city(city: City) -> None:
    """Check every City invariant; raises ScenarioError naming field and index."""
    n, t_len = city.num_stations, city.episode_length
    if n < 1:
        raise ScenarioError("num_stations must be >= 1")
    if t_len < 1:
        raise ScenarioError("episode_length must be >= 1")
    if city.fleet_size < 0:
        raise ScenarioError("fleet_size must be >= 0")
    if city.step_minutes <= 0:
        raise ScenarioError("step_minutes must be > 0")
    if city.adjacency.shape != (n, n):
        raise ScenarioError(f"adjacency shape {city.adjacency.shape} != ({n}, {n})")
    for name in ("travel_time", "price", "cost", "demand_rate"):
        arr = getattr(city, name)
        if arr.shape != (n, n, t_len):
            raise ScenarioError(f"{name} shape {arr.shape} != ({n}, {n}, {t_len})")
    if city.travel_time.min() < 1:
        idx = _first_index(city.travel_time < 1)
        raise ScenarioError(f"travel_time{list(idx)} = {int(city.travel_time[idx])} < 1")
    for name in ("price", "cost", "demand_rate"):
        arr = getattr(city, name)
        if not np.all(np.isfinite(arr)):
            idx = _first_index(~np.isfinite(arr))
            raise ScenarioError(f"{name}{list(idx)} is not finite")
        if arr.min() < 0:
            idx = _first_index(arr < 0)
            raise ScenarioError(f"{name}{list(idx)} = {float(arr[idx])} < 0")
    if not _strongly_connected(city.adjacency):
        raise ScenarioError("adjacency is not connected (some station is unreachable)")


def _first_index(mask: np.ndarray) -> tuple[int, ...]:
    idx = np.unravel_index(int(np.argmax(mask)), mask.shape)
    return tuple(int(v) for v in idx)


def _strongly_connected(adjacency: np.ndarray) -> bool:
    from scipy.sparse import csgraph

    n_comp, _ = csgraph.connected_components(
        csgraph.csgraph_from_dense(adjacency.astype(float)),
        directed=True, connection="strong",
    )
    return n_comp == 1


# ---------------------------------------------------------------------------
# JSON scenario files


_SCHEMA_KEYS = ("id", "num_stations", "adjacency", "travel_time", "price",
                "cost", "demand_rate", "fleet_size", "episode_length", "step_minutes")


def _expand(name: str, raw, n: int, t_len: int, dtype) -> np.ndarray:
    """Accept a flat NxN matrix (time-invariant) or a full NxNxT array."""
    arr = np.asarray(raw, dtype=dtype)
    if arr.shape == (n, n):
        arr = np.repeat(arr[:, :, None], t_len, axis=2)
    if arr.shape != (n, n, t_len):
        raise ScenarioError(f"{name}: expected ({n},{n}) or ({n},{n},{t_len}), got {arr.shape}")
    return arr


def load_scenario(path: str | Path) -> City:
    """Load and validate a scenario JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    missing = [k for k in _SCHEMA_KEYS if k != "step_minutes" and k not in raw]
    if missing:
        raise ScenarioError(f"{path}: missing keys {missing}")
    n = int(raw["num_stations"])
    t_len = int(raw["episode_length"])
    adjacency = np.zeros((n, n), dtype=bool)
    for edge in raw["adjacency"]:
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ScenarioError(f"adjacency edge [{i}, {j}] out of range for {n} stations")
        adjacency[i, j] = True
    return City(
        id=str(raw["id"]),
        num_stations=n,
        adjacency=adjacency,
        travel_time=_expand("travel_time", raw["travel_time"], n, t_len, np.int64),
        price=_expand("price", raw["price"], n, t_len, np.float64),
        cost=_expand("cost", raw["cost"], n, t_len, np.float64),
        demand_rate=_expand("demand_rate", raw["demand_rate"], n, t_len, np.float64),
        fleet_size=int(raw["fleet_size"]),
        episode_length=t_len,
        step_minutes=float(raw.get("step_minutes", 15.0)),
    )


def _compact(arr: np.ndarray):
    """Emit NxN if the array is time-invariant, else the full NxNxT nesting."""
    if np.all(arr == arr[:, :, :1]):
        return arr[:, :, 0].tolist()
    return arr.tolist()


def save_scenario(city: City, path: str | Path) -> None:
    """Write a City as scenario JSON with a stable key order."""
    edges = [[int(i), int(j)] for i, j in zip(*np.nonzero(city.adjacency))]
    doc = {
        "id": city.id,
        "num_stations": city.num_stations,
        "adjacency": edges,
        "travel_time": _compact(city.travel_time),
        "price": _compact(city.price),
        "cost": _compact(city.cost),
        "demand_rate": _compact(city.demand_rate),
        "fleet_size": city.fleet_size,
        "episode_length": city.episode_length,
        "step_minutes": city.step_minutes,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


# ---------------------------------------------------------------------------
# Synthetic task distribution


def generate_synthetic_city(params: SynthCityParams, seed: int) -> City:
    """Draw one city from the synthetic task distribution.

    Topology is Erdos-Renyi plus a random spanning tree (guarantees
    connectivity), symmetrized, with self-loops. Demand is distributed
    over OD pairs with 1-3 "attractor" stations receiving boosted inbound
    weight, which creates the supply/demand asymmetry that makes
    rebalancing matter. Deterministic in the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5C17]))
    n = int(rng.integers(params.node_range[0], params.node_range[1] + 1))
    t_len = params.episode_length

    adjacency = rng.random((n, n)) < params.edge_prob
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):   # random spanning tree
        adjacency[a, b] = True
    adjacency |= adjacency.T
    np.fill_diagonal(adjacency, True)

    lo, hi = params.trip_time_steps
    tt = rng.integers(lo, hi + 1, size=(n, n))
    tt = np.minimum(tt, tt.T)
    np.fill_diagonal(tt, 1)
    travel_time = np.repeat(tt[:, :, None].astype(np.int64), t_len, axis=2)

    cost = params.cost_per_step * travel_time.astype(np.float64)

    # Exactly round(fraction * N^2) OD pairs get a nonnegative margin.
    n_pairs = n * n
    n_profitable = int(round(params.profitable_fraction * n_pairs))
    margins = np.empty(n_pairs)
    chosen = rng.permutation(n_pairs)
    margins[chosen[:n_profitable]] = rng.uniform(0.0, max(params.margin_range[1], 0.0), size=n_profitable)
    margins[chosen[n_profitable:]] = rng.uniform(min(params.margin_range[0], 0.0), 0.0,
                                                 size=n_pairs - n_profitable)
    margins = margins.reshape(n, n)
    price = np.maximum(cost * (1.0 + margins[:, :, None]), 0.0)

    # Spread the city-wide hourly demand over OD pairs, boosting inbound
    # weight at the attractor stations.
    total_per_step = rng.uniform(*params.demand_per_hour) * params.step_minutes / 60.0
    n_hot = int(rng.integers(params.hotspot_range[0], params.hotspot_range[1] + 1))
    hot = rng.choice(n, size=min(n_hot, n), replace=False)
    weights = rng.random((n, n))
    np.fill_diagonal(weights, 0.0)
    weights[:, hot] *= params.hotspot_boost
    weights /= weights.sum()
    demand_rate = np.repeat((total_per_step * weights)[:, :, None], t_len, axis=2)

    fleet = int(rng.integers(params.fleet_range[0], params.fleet_range[1] + 1))

    return City(
        id=f"synth-{seed}",
        num_stations=n,
        adjacency=adjacency,
        travel_time=travel_time,
        price=price,
        cost=cost,
        demand_rate=demand_rate,
        fleet_size=fleet,
        episode_length=t_len,
        step_minutes=params.step_minutes,
    )


def sample_demand(city: City, t: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the step-t request matrix: independent Poisson per OD pair."""
    if not 0 <= t < city.episode_length:
        raise ValueError(f"t={t} outside [0, {city.episode_length})")
    return rng.poisson(city.demand_rate[:, :, t]).astype(np.int64)


# ---------------------------------------------------------------------------
# Disturbances


def apply_disturbance(city: City, d: Disturbance) -> City:
    """Return a perturbed copy of the city; the original is unmodified."""
    n = city.num_stations
    for s in d.target_stations:
        if not 0 <= s < n:
            raise ScenarioError(f"disturbance target {s} out of range for {n} stations")
    t0, t1 = d.window
    t1 = min(t1, city.episode_length)
    targets = np.array(sorted(set(d.target_stations)), dtype=int)
    touch = np.zeros((n, n), dtype=bool)

    if d.kind is DisturbanceKind.SPECIAL_EVENT:
        touch[targets, :] = True
        touch[:, targets] = True
        rate = city.demand_rate.copy()
        rate[:, :, t0:t1] = np.where(
            touch[:, :, None],
            rate[:, :, t0:t1] * d.multiplier,
            rate[:, :, t0:t1] * d.background_multiplier,
        )
        return replace(city, demand_rate=rate)

    if d.kind is DisturbanceKind.PRICE_CHANGE:
        touch[targets, :] = True
        touch[:, targets] = True
        price = city.price.copy()
        price[:, :, t0:t1] = np.where(
            touch[:, :, None], price[:, :, t0:t1] * d.multiplier, price[:, :, t0:t1]
        )
        return replace(city, price=price)

    # Congestion: inbound travel times only, rounded up to whole steps.
    touch[:, targets] = True
    tt = city.travel_time.copy()
    scaled = np.ceil(tt[:, :, t0:t1] * d.multiplier).astype(np.int64)
    tt[:, :, t0:t1] = np.where(touch[:, :, None], scaled, tt[:, :, t0:t1])
    return replace(city, travel_time=tt)


def load_disturbances(path: str | Path) -> list[Disturbance]:
    """Read a disturbance file: a JSON list of disturbance objects."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ScenarioError(f"{path}: expected a JSON list of disturbances")
    out = []
    for item in raw:
        try:
            kind = DisturbanceKind(item["kind"])
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"{path}: bad disturbance kind in {item}") from exc
        out.append(Disturbance(
            kind=kind,
            target_stations=tuple(int(s) for s in item["target_stations"]),
            multiplier=float(item["multiplier"]),
            window=(int(item["window"][0]), int(item["window"][1])),
            background_multiplier=float(item.get("background_multiplier", 1.0)),
        ))
    return out
