"""Exact controllers for the three-step framework, reduced to min-cost flow.

- solve_matching: the passenger-assignment profit maximization (integral
  because the constraint matrix is totally unimodular).
- solve_rebalance: the minimum-cost repositioning problem turned into a
  flow network with per-station outflow caps.
- solve_mpc_oracle / solve_mpc_forecast: receding-horizon controllers on
  a time-expanded copy of the network, with exact future demand or the
  Poisson rates as service capacities.

Every solve is re-validated by an independent feasibility checker before
its result is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation
from .flow import FlowNetwork, SolveStatus, min_cost_flow
from .scenario import City

__all__ = [
    "MpcPlan",
    "check_matching",
    "check_rebalance",
    "clamp_flows",
    "solve_matching",
    "solve_mpc_forecast",
    "solve_mpc_oracle",
    "solve_rebalance",
]

DEFAULT_MPC_HORIZON = 6


def solve_matching(demand: np.ndarray, price: np.ndarray, cost: np.ndarray,
                   idle: np.ndarray) -> tuple[np.ndarray, float]:
    """Assign idle vehicles to requests, maximizing total margin.

    Returns integral passenger flows x (0 <= x <= demand, row sums capped
    by idle) and the realized profit. OD pairs priced below cost are never
    served; serving is optional, so dropping them is lossless.
    """
    demand = np.asarray(demand, dtype=np.int64)
    idle = np.asarray(idle, dtype=np.int64)
    n = demand.shape[0]
    if demand.shape != (n, n) or price.shape != (n, n) or cost.shape != (n, n):
        raise ValueError("demand/price/cost must all be (N, N)")
    if idle.shape != (n,):
        raise ValueError(f"idle has shape {idle.shape}, expected ({n},)")
    if demand.min() < 0 or idle.min() < 0:
        raise ValueError("demand and idle must be nonnegative")

    x = np.zeros((n, n), dtype=np.int64)
    margin = price - cost
    if demand.sum() == 0 or idle.sum() == 0:
        check_matching(x, demand, idle)
        return x, 0.0

    sink = n
    arcs = []
    service = []   # (arc index, i, j)
    for i in range(n):
        for j in range(n):
            if demand[i, j] > 0 and margin[i, j] >= 0.0:
                service.append((len(arcs), i, j))
                arcs.append((i, sink, float(demand[i, j]), -float(margin[i, j])))
    for i in range(n):
        arcs.append((i, sink, math.inf, 0.0))   # unmatched vehicles stay put
    supply = [int(v) for v in idle] + [-int(idle.sum())]
    sol = min_cost_flow(FlowNetwork(n + 1, tuple(arcs), tuple(supply)))
    if sol.status is not SolveStatus.OPTIMAL:
        raise InvariantViolation("matching network unexpectedly infeasible")

    for k, i, j in service:
        x[i, j] = int(round(sol.arc_flows[k]))
    profit = -sol.objective
    check_matching(x, demand, idle)
    return x, profit


def check_matching(x: np.ndarray, demand: np.ndarray, idle: np.ndarray) -> None:
    """Re-validate passenger flows against the assignment constraints."""
    if np.any(x != np.floor(x)):
        raise InvariantViolation("matching flows are not integral")
    if np.any(x < 0) or np.any(x > demand):
        raise InvariantViolation("matching flow outside [0, demand]")
    row = x.sum(axis=1)
    if np.any(row > idle):
        raise InvariantViolation(
            f"matched departures {row.tolist()} exceed idle supply {np.asarray(idle).tolist()}")


def solve_rebalance(idle: np.ndarray, desired: np.ndarray,
                    cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Move idle vehicles toward the desired per-station counts at least cost.

    Constraints: per-station net gain must reach desired - idle, and total
    departures from a station cannot exceed its idle count. No self moves.
    """
    idle = np.asarray(idle, dtype=np.int64)
    desired = np.asarray(desired, dtype=np.int64)
    n = idle.shape[0]
    if desired.shape != (n,) or cost.shape != (n, n):
        raise ValueError("idle/desired must be (N,), cost (N, N)")
    if idle.min() < 0 or desired.min() < 0:
        raise ValueError("idle and desired must be nonnegative")
    if np.any(cost < 0):
        raise ValueError("rebalancing costs must be nonnegative")
    if desired.sum() > idle.sum():
        raise ValueError(
            f"desired total {desired.sum()} exceeds available vehicles {idle.sum()}")

    y = np.zeros((n, n), dtype=np.int64)
    if np.all(idle >= desired):   # nothing to move; zero flow is optimal (costs >= 0)
        check_rebalance(y, idle, desired)
        return y, 0.0

    # Station node i, departure node n+i (its arc from i caps total outflow),
    # sink 2n absorbs the surplus allowed by the floor rule.
    sink = 2 * n
    arcs = []
    for i in range(n):
        arcs.append((i, n + i, float(idle[i]), 0.0))
    moves = []
    for i in range(n):
        for j in range(n):
            if i != j:
                moves.append((len(arcs), i, j))
                arcs.append((n + i, j, math.inf, float(cost[i, j])))
    for i in range(n):
        arcs.append((i, sink, math.inf, 0.0))
    supply = [int(v) for v in (idle - desired)] + [0] * n + [-int(idle.sum() - desired.sum())]
    sol = min_cost_flow(FlowNetwork(2 * n + 1, tuple(arcs), tuple(supply)))
    if sol.status is not SolveStatus.OPTIMAL:
        raise InvariantViolation("rebalancing network unexpectedly infeasible")

    for k, i, j in moves:
        y[i, j] = int(round(sol.arc_flows[k]))
    total_cost = float(np.dot(sol.arc_flows, [a[3] for a in arcs]))
    check_rebalance(y, idle, desired)
    return y, total_cost


def check_rebalance(y: np.ndarray, idle: np.ndarray, desired: np.ndarray) -> None:
    """Re-validate rebalancing flows against the repositioning constraints."""
    if np.any(y != np.floor(y)):
        raise InvariantViolation("rebalancing flows are not integral")
    if np.any(y < 0):
        raise InvariantViolation("negative rebalancing flow")
    if np.any(np.diag(y) != 0):
        raise InvariantViolation("self-rebalancing flow is undefined")
    out = y.sum(axis=1)
    if np.any(out > idle):
        raise InvariantViolation(
            f"rebalancing departures {out.tolist()} exceed idle supply {np.asarray(idle).tolist()}")
    net = y.sum(axis=0) - out
    if np.any(net + idle < desired):
        raise InvariantViolation("rebalancing misses the desired vehicle counts")


def clamp_flows(y: np.ndarray, budget: np.ndarray) -> np.ndarray:
    """Reduce flows so each row sum fits its budget.

    Deterministic repair for plans whose assumed idle supply exceeds the
    realized one: within a row, low-index destinations keep their flow
    and later ones are truncated.
    """
    y = np.array(y, dtype=np.int64)
    n = y.shape[0]
    for i in range(n):
        left = int(budget[i])
        for j in range(n):
            keep = min(int(y[i, j]), max(left, 0))
            y[i, j] = keep
            left -= keep
    return y


@dataclass(frozen=True)
class MpcPlan:
    """Receding-horizon rebalancing plan; only step 0 is ever executed."""

    horizon: int
    flows: np.ndarray            # (horizon, N, N) integral rebalancing moves
    predicted_profit: float

    @property
    def first_step(self) -> np.ndarray:
        return self.flows[0]


def _scheduled_arrivals(state, horizon: int, n: int) -> np.ndarray:
    """Arrivals already in transit, per offset 1..horizon from the clock."""
    arr = np.zeros((horizon + 1, n), dtype=np.int64)
    for step, counts in state.in_transit.items():
        k = step - state.clock
        if 1 <= k <= horizon:
            arr[k] += counts
    return arr


def _solve_time_expanded(city: City, state, horizon: int,
                         service_caps: np.ndarray) -> MpcPlan:
    """Joint service+rebalancing min-cost flow over (station, step) copies.

    service_caps[k, i, j] caps the passenger flow departing i for j at
    clock+k (realized demand for the oracle, Poisson rates for the
    forecast). Layers past the episode end carry no service or moves.
    """
    if horizon < 1:
        raise ValueError("MPC horizon must be >= 1")
    n = city.num_stations
    t0 = int(state.clock)
    idle = np.asarray(state.idle, dtype=np.int64)
    arrivals = _scheduled_arrivals(state, horizon, n)

    def node(k: int, i: int) -> int:
        return k * n + i

    sink = (horizon + 1) * n
    arcs = []
    reb_arcs = []    # (arc index, k, i, j)
    for k in range(horizon):
        tk = t0 + k
        if tk < city.episode_length:
            margin = city.margin(tk)
            tt = city.travel_time[:, :, tk]
            caps = service_caps[k]
            for i in range(n):
                for j in range(n):
                    if caps[i, j] > 0 and margin[i, j] >= 0.0:
                        arrive = k + int(tt[i, j])
                        dst = node(arrive, j) if arrive <= horizon else sink
                        arcs.append((node(k, i), dst, float(caps[i, j]),
                                     -float(margin[i, j])))
            for i in range(n):
                for j in range(n):
                    if i != j:
                        arrive = k + int(tt[i, j])
                        if arrive <= horizon:
                            reb_arcs.append((len(arcs), k, i, j))
                            arcs.append((node(k, i), node(arrive, j), math.inf,
                                         float(city.cost[i, j, tk])))
        for i in range(n):
            arcs.append((node(k, i), node(k + 1, i), math.inf, 0.0))
    for i in range(n):
        arcs.append((node(horizon, i), sink, math.inf, 0.0))

    supply = np.zeros((horizon + 1) * n + 1, dtype=np.int64)
    supply[:n] = idle
    for k in range(1, horizon + 1):
        supply[k * n:(k + 1) * n] += arrivals[k]
    supply[sink] = -int(supply.sum())

    sol = min_cost_flow(FlowNetwork(sink + 1, tuple(arcs), tuple(int(v) for v in supply)))
    if sol.status is not SolveStatus.OPTIMAL:
        raise InvariantViolation("time-expanded network unexpectedly infeasible")

    flows = np.zeros((horizon, n, n), dtype=np.int64)
    for arc_idx, k, i, j in reb_arcs:
        flows[k, i, j] = int(math.floor(sol.arc_flows[arc_idx] + 1e-9))
    plan = MpcPlan(horizon=horizon, flows=flows, predicted_profit=-sol.objective)
    if np.any(plan.first_step.sum(axis=1) > idle):
        raise InvariantViolation("MPC first-step flows exceed current idle supply")
    return plan


def solve_mpc_oracle(city: City, state, horizon: int,
                     future_demand: np.ndarray) -> MpcPlan:
    """Plan with perfect foresight of the realized demand over the horizon.

    future_demand[k] must be the exact request matrix the simulator will
    produce at clock+k; the caller is responsible for that (the simulator
    exposes its realized demand stream for this purpose).
    """
    future_demand = np.asarray(future_demand, dtype=np.int64)
    if future_demand.shape != (horizon, city.num_stations, city.num_stations):
        raise ValueError(f"future_demand must be ({horizon}, N, N)")
    if future_demand.min() < 0:
        raise ValueError("demand must be nonnegative")
    return _solve_time_expanded(city, state, horizon, future_demand.astype(np.float64))


def solve_mpc_forecast(city: City, state, horizon: int) -> MpcPlan:
    """Plan against the unbiased demand forecast: the Poisson arrival rates.

    Solves the LP relaxation (rates are fractional capacities); the
    integral plan is recovered by rounding the rebalancing flows down,
    which never dispatches unavailable vehicles.
    """
    if horizon < 1:
        raise ValueError("MPC horizon must be >= 1")
    n = city.num_stations
    caps = np.zeros((horizon, n, n))
    t0 = int(state.clock)
    for k in range(horizon):
        if t0 + k < city.episode_length:
            caps[k] = city.demand_rate[:, :, t0 + k]
    return _solve_time_expanded(city, state, horizon, caps)
