"""Exact minimum-cost network flow.

Primal network simplex over an explicit arc list, with Bland's
anti-cycling rule on a fixed arc ordering, so every solve is
deterministic and ties between cost-equal optima break toward the
lowest arc index. Flows are integral whenever supplies and capacities
are integral (the basis is a spanning tree); fractional capacities are
supported, which is what the forecast controller's LP relaxation uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = ["FlowNetwork", "FlowSolution", "SolveStatus", "min_cost_flow",
           "check_flow", "to_dimacs", "solution_to_dimacs"]


INF = math.inf


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class FlowNetwork:
    """A min-cost-flow instance.

    arcs: (src, dst, capacity, unit_cost) tuples; capacity may be math.inf.
    node_supply: per node, positive = sends flow, negative = receives;
    must sum to zero.
    """

    num_nodes: int
    arcs: tuple[tuple[int, int, float, float], ...]
    node_supply: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(tuple(a) for a in self.arcs))
        object.__setattr__(self, "node_supply", tuple(int(b) for b in self.node_supply))
        if self.num_nodes < 1:
            raise ValueError("network needs at least one node")
        if len(self.node_supply) != self.num_nodes:
            raise ValueError("node_supply length != num_nodes")
        if sum(self.node_supply) != 0:
            raise ValueError(f"node supplies sum to {sum(self.node_supply)}, not 0")
        for k, (s, t, cap, cost) in enumerate(self.arcs):
            if not (0 <= s < self.num_nodes and 0 <= t < self.num_nodes):
                raise ValueError(f"arc {k}: endpoint out of range")
            if s == t:
                raise ValueError(f"arc {k}: self-loops are not supported")
            if cap < 0:
                raise ValueError(f"arc {k}: negative capacity {cap}")
            if not math.isfinite(cost):
                raise ValueError(f"arc {k}: non-finite cost {cost}")


@dataclass(frozen=True)
class FlowSolution:
    """Arc flows plus the objective; flows are integral for integral inputs."""

    arc_flows: np.ndarray
    objective: float
    status: SolveStatus

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


# Nonbasic arc states; basic arcs are tracked through the spanning tree.
_LOWER, _BASIC, _UPPER = 0, 1, 2


def min_cost_flow(net: FlowNetwork, tol: float | None = None) -> FlowSolution:
    """Solve a min-cost-flow instance exactly.

    `tol` is the reduced-cost slack treated as zero; the default scales
    with the instance and is far below 1, so integer-valued data is
    solved exactly while float roundoff cannot stall the pivot loop.
    Raises ValueError on malformed or unbounded instances; infeasibility
    is reported through the status field.
    """
    m = len(net.arcs)
    n = net.num_nodes
    root = n
    b = np.array(net.node_supply, dtype=np.float64)

    S = np.empty(m + n, dtype=np.int64)
    T = np.empty(m + n, dtype=np.int64)
    U = np.empty(m + n, dtype=np.float64)
    C = np.empty(m + n, dtype=np.float64)
    for k, (s, t, cap, cost) in enumerate(net.arcs):
        S[k], T[k], U[k], C[k] = s, t, cap, cost

    finite_caps = U[:m][np.isfinite(U[:m])]
    faux = 3.0 * max(float(finite_caps.sum()) if finite_caps.size else 0.0,
                     float(np.abs(C[:m]).sum()),
                     float(np.abs(b).max()) if n else 0.0,
                     1.0)
    inf_arcs = ~np.isfinite(U[:m])
    U[:m][inf_arcs] = faux
    if tol is None:
        tol = 1e-14 * faux

    # Artificial star around the root gives the initial strongly feasible tree.
    x = np.zeros(m + n, dtype=np.float64)
    pi = np.zeros(n + 1, dtype=np.float64)
    for i in range(n):
        k = m + i
        if b[i] >= 0:
            S[k], T[k] = i, root
            x[k] = b[i]
            pi[i] = faux
        else:
            S[k], T[k] = root, i
            x[k] = -b[i]
            pi[i] = -faux
        U[k], C[k] = faux, faux

    state = np.full(m, _LOWER, dtype=np.int8)
    parent = np.empty(n + 1, dtype=np.int64)
    pedge = np.empty(n + 1, dtype=np.int64)
    depth = np.empty(n + 1, dtype=np.int64)
    tree_adj: list[list[int]] = [[] for _ in range(n + 1)]
    for i in range(n):
        tree_adj[i].append(m + i)
        tree_adj[root].append(m + i)

    def _refresh_tree():
        """Recompute parent/pedge/depth/potentials by DFS over tree arcs."""
        parent[root], pedge[root], depth[root], pi[root] = -1, -1, 0, 0.0
        seen = np.zeros(n + 1, dtype=bool)
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            for k in tree_adj[u]:
                w = T[k] if S[k] == u else S[k]
                if seen[w]:
                    continue
                seen[w] = True
                parent[w], pedge[w] = u, k
                depth[w] = depth[u] + 1
                # Basic arcs have zero reduced cost: C - pi[S] + pi[T] = 0.
                pi[w] = pi[u] - C[k] if S[k] == u else pi[u] + C[k]
                stack.append(w)

    _refresh_tree()

    Sr, Tr, Cr = S[:m], T[:m], C[:m]
    while True:
        rc = Cr - pi[Sr] + pi[Tr]
        eligible = ((state == _LOWER) & (rc < -tol)) | ((state == _UPPER) & (rc > tol))
        if not eligible.any():
            break
        enter = int(np.argmax(eligible))   # Bland: lowest eligible arc index

        if state[enter] == _LOWER:
            tail, head = S[enter], T[enter]
        else:
            tail, head = T[enter], S[enter]

        # Cycle = entering arc + the tree path head -> apex -> tail,
        # oriented in the push direction (out of `tail` through the arc).
        cycle = [(enter, state[enter] == _LOWER)]
        a, c = int(tail), int(head)
        while depth[a] > depth[c]:
            k = pedge[a]
            cycle.append((k, T[k] == a))     # flow runs parent -> a
            a = parent[a]
        while depth[c] > depth[a]:
            k = pedge[c]
            cycle.append((k, S[k] == c))     # flow runs c -> parent
            c = parent[c]
        while a != c:
            k = pedge[a]
            cycle.append((k, T[k] == a))
            a = parent[a]
            k = pedge[c]
            cycle.append((k, S[k] == c))
            c = parent[c]

        resids = [U[k] - x[k] if fwd else x[k] for k, fwd in cycle]
        delta = min(resids)
        if not math.isfinite(delta):
            raise ValueError("objective is unbounded (negative-cost cycle with infinite capacity)")
        # Bland again on the way out: lowest arc index among the blocking arcs.
        leave, leave_fwd = min(
            (kf for kf, r in zip(cycle, resids) if r == delta), key=lambda kf: kf[0])

        if delta != 0.0:
            for k, fwd in cycle:
                x[k] = x[k] + delta if fwd else x[k] - delta
        # Pin the leaving arc exactly to the bound it hit.
        x[leave] = U[leave] if leave_fwd else 0.0

        if leave == enter:
            state[enter] = _UPPER if state[enter] == _LOWER else _LOWER
            continue

        # Basis exchange: drop `leave`, adopt `enter`, rebuild the tree labels.
        for node in (S[leave], T[leave]):
            tree_adj[node].remove(leave)
        if leave < m:
            state[leave] = _UPPER if leave_fwd else _LOWER
        tree_adj[S[enter]].append(enter)
        tree_adj[T[enter]].append(enter)
        state[enter] = _BASIC
        _refresh_tree()

    # Residual artificial flow means infeasible; with fractional capacities
    # the augmentations accrue float roundoff, so compare against a margin
    # far below any genuine residual (supplies are integral).
    if float(x[m:].max()) > 1e-9 * max(1.0, float(np.abs(b).max())):
        return FlowSolution(arc_flows=np.zeros(m), objective=float("nan"),
                            status=SolveStatus.INFEASIBLE)
    if np.any(x[:m][inf_arcs] >= faux):
        raise ValueError("objective is unbounded (flow hit the infinite-capacity sentinel)")

    flows = x[:m].copy()
    objective = float(np.dot(flows, C[:m]))
    return FlowSolution(arc_flows=flows, objective=objective, status=SolveStatus.OPTIMAL)


def check_flow(net: FlowNetwork, solution: FlowSolution, atol: float = 0.0) -> None:
    """Independent feasibility validator: bounds, conservation, objective.

    Raises AssertionError on any violation; used after every solve in the
    simulator and throughout the test suite.
    """
    x = solution.arc_flows
    assert len(x) == len(net.arcs), "flow vector length mismatch"
    net_out = np.zeros(net.num_nodes)
    for k, (s, t, cap, _cost) in enumerate(net.arcs):
        assert x[k] >= -atol, f"arc {k}: negative flow {x[k]}"
        assert x[k] <= cap + atol, f"arc {k}: flow {x[k]} over capacity {cap}"
        net_out[s] += x[k]
        net_out[t] -= x[k]
    for i, supply in enumerate(net.node_supply):
        assert abs(net_out[i] - supply) <= atol, (
            f"node {i}: net outflow {net_out[i]} != supply {supply}")
    costs = np.array([a[3] for a in net.arcs])
    assert solution.objective == float(np.dot(x, costs)), "objective mismatch"


def to_dimacs(net: FlowNetwork, comment: str = "") -> str:
    """Render the instance in DIMACS min-cost-flow text format (1-indexed)."""
    lines = []
    if comment:
        lines.append(f"c {comment}")
    lines.append(f"p min {net.num_nodes} {len(net.arcs)}")
    for i, supply in enumerate(net.node_supply):
        if supply != 0:
            lines.append(f"n {i + 1} {supply}")
    for s, t, cap, cost in net.arcs:
        cap_txt = "inf" if math.isinf(cap) else repr(float(cap))
        lines.append(f"a {s + 1} {t + 1} 0 {cap_txt} {float(cost)!r}")
    return "\n".join(lines) + "\n"


def solution_to_dimacs(net: FlowNetwork, solution: FlowSolution) -> str:
    """Render a solution as DIMACS flow lines with the objective in a comment."""
    lines = [f"c status {solution.status.value}", f"c objective {solution.objective!r}"]
    for (s, t, _cap, _cost), flow in zip(net.arcs, solution.arc_flows):
        if flow != 0:
            lines.append(f"f {s + 1} {t + 1} {flow!r}")
    return "\n".join(lines) + "\n"
