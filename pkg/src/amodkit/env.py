"""The fleet-rebalancing MDP.

Each step runs the three-step control loop: greedy profit-maximizing
matching of idle vehicles to the step's requests, conversion of the
policy's desired idle-vehicle distribution into integral station targets
(floor rule), and a minimum-cost repositioning solve. The step reward is
matching profit minus rebalancing cost, exactly.

Demand is an independent Poisson draw per OD pair per step, realized as
a pure function of (episode seed, t) so that matched-seed comparisons
across policies see identical requests and an oracle controller can be
given the exact future realization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvariantViolation
from .flowopt import check_matching, check_rebalance, clamp_flows, solve_matching, solve_rebalance
from .scenario import City, sample_demand

__all__ = [
    "DEFAULT_HORIZON",
    "FlowAction",
    "Observation",
    "RebalanceEnv",
    "SimState",
    "StepInfo",
    "StepResult",
    "Trajectory",
    "derive_seed",
    "desired_counts",
    "run_episode",
    "validate_action",
    "write_trajectory_jsonl",
]

DEFAULT_HORIZON = 6
_DEMAND_TAG = 0xD31A


def derive_seed(*parts: int) -> int:
    """Deterministically combine integer parts into one RNG seed."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass
class SimState:
    """Mutable simulator state: the clock, idle pools and moving vehicles.

    in_transit maps an arrival step to per-station vehicle counts; every
    key is strictly greater than the clock between steps.
    """

    city: City
    clock: int
    idle: np.ndarray                       # (N,) int64
    in_transit: dict[int, np.ndarray]
    seed: int

    def vehicles_in_transit(self) -> int:
        return int(sum(int(v.sum()) for v in self.in_transit.values()))


@dataclass(frozen=True)
class Observation:
    """Per-station feature matrix plus adjacency; the policy input.

    Feature columns (width F = horizon + 10, fixed across cities):
    idle count; projected idle for offsets 0..horizon; outbound and
    inbound request counts; demand-weighted mean outbound price and cost;
    previous action component; previous reward, previous episode-end flag
    and normalized clock (broadcast). The first observation of a trial
    carries zeros in the previous-action/reward/flag slots.
    """

    adjacency: np.ndarray        # (N, N) float64
    features: np.ndarray         # (N, F) float64
    clock: int
    episode_length: int
    fleet_size: int
    price_scale: float
    profit_scale: float

    @property
    def num_stations(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class StepInfo:
    served: int
    matching_profit: float
    rebalancing_cost: float


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: StepInfo


@dataclass(frozen=True)
class FlowAction:
    """Direct rebalancing flows, for controllers that plan OD moves."""

    flows: np.ndarray            # (N, N) int64, zero diagonal


def validate_action(a: np.ndarray, n: int) -> np.ndarray:
    """Check a desired idle-vehicle distribution: simplex point of size N."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"action has shape {a.shape}, expected ({n},)")
    if not np.all(np.isfinite(a)) or a.min() < 0.0:
        raise ValueError("action components must be finite and nonnegative")
    if abs(float(a.sum()) - 1.0) > 1e-9:
        raise ValueError(f"action sums to {a.sum()!r}, not 1")
    return a


def desired_counts(a: np.ndarray, idle: np.ndarray) -> np.ndarray:
    """Integral station targets: floor(a_i * total idle); never oversubscribes."""
    total = int(np.asarray(idle).sum())
    return np.floor(np.asarray(a, dtype=np.float64) * total).astype(np.int64)


class RebalanceEnv:
    """One episode-at-a-time simulator for a fixed city."""

    def __init__(self, city: City, horizon: int = DEFAULT_HORIZON):
        if horizon < 0:
            raise ValueError("projection horizon must be >= 0")
        self.city = city
        self.horizon = horizon
        self.state: SimState | None = None
        self._demand_cache: dict[int, np.ndarray] = {}
        self._done = True
        self._prev_action = np.zeros(city.num_stations)
        self._prev_reward = 0.0
        self._prev_done = 0.0
        pos = city.price[city.price > 0]
        self._price_scale = float(pos.mean()) if pos.size else 1.0
        margin = city.price - city.cost
        gain = margin[margin > 0]
        mean_margin = float(gain.mean()) if gain.size else 1.0
        self._profit_scale = max(float(city.fleet_size) * mean_margin, 1.0)

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: int, placement: str = "uniform",
              carry: tuple[np.ndarray, float, float] | None = None) -> Observation:
        """Start an episode. `carry` threads (action, reward, done-flag)
        across episode boundaries inside a meta-learning trial; omit it for
        a fresh trial, which zeroes those input slots."""
        city = self.city
        n, fleet = city.num_stations, city.fleet_size
        if placement == "uniform":
            idle = np.full(n, fleet // n, dtype=np.int64)
            idle[: fleet % n] += 1
        elif placement == "proportional":
            idle = self._proportional_placement()
        else:
            raise ValueError(f"unknown placement {placement!r}")
        self.state = SimState(city=city, clock=0, idle=idle, in_transit={}, seed=int(seed))
        self._demand_cache = {}
        self._done = False
        if carry is None:
            self._prev_action = np.zeros(n)
            self._prev_reward = 0.0
            self._prev_done = 0.0
        else:
            action, reward, done_flag = carry
            self._prev_action = np.asarray(action, dtype=np.float64).copy()
            self._prev_reward = float(reward)
            self._prev_done = float(done_flag)
        self._check_conservation()
        return self._build_observation()

    def _proportional_placement(self) -> np.ndarray:
        city = self.city
        w = city.demand_rate.mean(axis=2).sum(axis=1)   # mean outbound rate
        if w.sum() <= 0:
            w = np.ones(city.num_stations)
        w = w / w.sum()
        base = np.floor(w * city.fleet_size).astype(np.int64)
        remainder = city.fleet_size - int(base.sum())
        frac = w * city.fleet_size - base
        for i in np.lexsort((np.arange(len(w)), -frac))[:remainder]:
            base[i] += 1
        return base

    # -- demand stream -------------------------------------------------------

    def realized_demand(self, t: int) -> np.ndarray:
        """The exact request matrix for step t; zeros past the episode end.

        A pure function of (episode seed, t): policies may peek at any
        step without disturbing the simulation.
        """
        if self.state is None:
            raise InvariantViolation("reset the environment first")
        if t >= self.city.episode_length:
            return np.zeros((self.city.num_stations,) * 2, dtype=np.int64)
        if t not in self._demand_cache:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.state.seed, _DEMAND_TAG, int(t)]))
            self._demand_cache[t] = sample_demand(self.city, t, rng)
        return self._demand_cache[t]

    # -- dynamics ------------------------------------------------------------

    def step(self, action) -> StepResult:
        """Advance one step; see the module docstring for the stage order."""
        if self.state is None or self._done:
            raise InvariantViolation("step() called on a terminal or unreset environment")
        state = self.state
        city = self.city
        n, t = city.num_stations, state.clock
        self._deliver_arrivals()

        demand = self.realized_demand(t)
        price_t, cost_t = city.price[:, :, t], city.cost[:, :, t]
        x, profit = solve_matching(demand, price_t, cost_t, state.idle)
        self._depart(x, t)

        if isinstance(action, FlowAction):
            y = clamp_flows(np.asarray(action.flows, dtype=np.int64), state.idle)
            np.fill_diagonal(y, 0)
            check_rebalance(y, state.idle, np.zeros(n, dtype=np.int64))
            reb_cost = float(np.dot(y.ravel().astype(np.float64), cost_t.ravel()))
            implied = self._implied_distribution(y)
        else:
            a = validate_action(action, n)
            targets = desired_counts(a, state.idle)
            y, reb_cost = solve_rebalance(state.idle, targets, cost_t)
            implied = a
        self._depart(y, t)

        reward = profit - reb_cost
        info = StepInfo(served=int(x.sum()), matching_profit=profit,
                        rebalancing_cost=reb_cost)

        state.clock = t + 1
        self._deliver_arrivals()
        self._check_conservation()
        self._done = state.clock >= city.episode_length
        self._prev_action = np.asarray(implied, dtype=np.float64)
        self._prev_reward = reward
        self._prev_done = 0.0
        obs = self._build_observation()
        return StepResult(observation=obs, reward=reward, done=self._done, info=info)

    def _depart(self, flows: np.ndarray, t: int) -> None:
        """Send flows[i, j] vehicles from idle pool i toward j."""
        state, city = self.state, self.city
        out = flows.sum(axis=1)
        if np.any(out > state.idle):
            raise InvariantViolation("departures exceed idle vehicles")
        state.idle = state.idle - out
        tt = city.travel_time[:, :, t]
        for i, j in zip(*np.nonzero(flows)):
            arrive = t + int(tt[i, j])
            bucket = state.in_transit.get(arrive)
            if bucket is None:
                bucket = np.zeros(city.num_stations, dtype=np.int64)
                state.in_transit[arrive] = bucket
            bucket[j] += int(flows[i, j])

    def _deliver_arrivals(self) -> None:
        state = self.state
        due = [k for k in state.in_transit if k <= state.clock]
        for k in due:
            state.idle = state.idle + state.in_transit.pop(k)

    def _check_conservation(self) -> None:
        state = self.state
        total = int(state.idle.sum()) + state.vehicles_in_transit()
        if total != self.city.fleet_size or state.idle.min() < 0:
            raise InvariantViolation(
                f"vehicle conservation broken: idle+transit={total}, fleet={self.city.fleet_size}")

    def _implied_distribution(self, y: np.ndarray) -> np.ndarray:
        """Desired-distribution equivalent of direct flows (for the features)."""
        idle = self.state.idle
        total = int(idle.sum())
        if total == 0:
            return np.full(len(idle), 1.0 / len(idle))
        target = idle - y.sum(axis=1) + y.sum(axis=0)
        return target / float(total)

    # -- observations --------------------------------------------------------

    def project_availability(self, horizon: int | None = None) -> np.ndarray:
        """Idle counts projected forward from scheduled arrivals only.

        Shape (horizon+1, N): offset 0 is the current idle vector; future
        offsets add vehicles already in transit. Departures are unknown
        (they depend on future actions) and are not subtracted.
        """
        if horizon is None:
            horizon = self.horizon
        if horizon < 0:
            raise ValueError("projection horizon must be >= 0")
        state = self.state
        n = self.city.num_stations
        proj = np.empty((horizon + 1, n), dtype=np.int64)
        proj[0] = state.idle
        for k in range(1, horizon + 1):
            arrivals = state.in_transit.get(state.clock + k)
            proj[k] = proj[k - 1] + (arrivals if arrivals is not None else 0)
        return proj

    def _build_observation(self) -> Observation:
        city, state = self.city, self.state
        n, t, t_len = city.num_stations, state.clock, city.episode_length
        h = self.horizon
        if t < t_len:
            demand = self.realized_demand(t).astype(np.float64)
            price_t, cost_t = city.price[:, :, t], city.cost[:, :, t]
        else:
            demand = np.zeros((n, n))
            price_t = cost_t = np.zeros((n, n))
        out_demand = demand.sum(axis=1)
        weight = np.maximum(out_demand, 1.0)

        feats = np.empty((n, h + 10))
        feats[:, 0] = state.idle
        feats[:, 1:h + 2] = self.project_availability(h).T
        feats[:, h + 2] = out_demand
        feats[:, h + 3] = demand.sum(axis=0)
        feats[:, h + 4] = (demand * price_t).sum(axis=1) / weight
        feats[:, h + 5] = (demand * cost_t).sum(axis=1) / weight
        feats[:, h + 6] = self._prev_action
        feats[:, h + 7] = self._prev_reward
        feats[:, h + 8] = self._prev_done
        feats[:, h + 9] = t / t_len
        return Observation(
            adjacency=city.adjacency.astype(np.float64),
            features=feats,
            clock=t,
            episode_length=t_len,
            fleet_size=city.fleet_size,
            price_scale=self._price_scale,
            profit_scale=self._profit_scale,
        )


# ---------------------------------------------------------------------------
# Episode driver


@dataclass
class Trajectory:
    observations: list[Observation] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    infos: list[StepInfo] = field(default_factory=list)
    final_observation: Observation | None = None

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def served(self) -> int:
        return int(sum(i.served for i in self.infos))

    @property
    def rebalancing_cost(self) -> float:
        return float(sum(i.rebalancing_cost for i in self.infos))

    def demand_alignment(self) -> list[float]:
        """Per-step cosine similarity between the action and outbound demand."""
        from .report import cosine_alignment

        h = (self.observations[0].features.shape[1] - 10) if self.observations else 0
        return [
            cosine_alignment(a, obs.features[:, h + 2])
            for a, obs in zip(self.actions, self.observations)
        ]


def run_episode(policy, city: City, seed: int, *, env: RebalanceEnv | None = None,
                placement: str = "uniform",
                carry: tuple[np.ndarray, float, float] | None = None,
                horizon: int = DEFAULT_HORIZON) -> Trajectory:
    """Roll one full episode of `policy` on `city`.

    The policy is a callable obs -> action; if it defines begin_episode(env,
    seed) that hook runs first (controllers use it to see the simulator
    state and seed their own sampling).
    """
    if env is None:
        env = RebalanceEnv(city, horizon=horizon)
    if hasattr(policy, "begin_episode"):
        policy.begin_episode(env, seed)
    obs = env.reset(seed, placement=placement, carry=carry)
    traj = Trajectory()
    for t in range(city.episode_length):
        action = policy(obs)
        try:
            result = env.step(action)
        except ValueError as exc:
            raise ValueError(f"invalid action at step {t}: {exc}") from exc
        traj.observations.append(obs)
        traj.actions.append(np.asarray(env._prev_action, dtype=np.float64))
        traj.rewards.append(result.reward)
        traj.infos.append(result.info)
        obs = result.observation
    traj.final_observation = obs
    return traj


def write_trajectory_jsonl(traj: Trajectory, path: str | Path) -> None:
    """One JSON object per step: t, action, reward, served, reb_cost."""
    with open(path, "w") as fh:
        for t, (a, r, info) in enumerate(zip(traj.actions, traj.rewards, traj.infos)):
            fh.write(json.dumps({
                "t": t,
                "action": [float(v) for v in a],
                "reward": r,
                "served": info.served,
                "reb_cost": info.rebalancing_cost,
            }) + "\n")
