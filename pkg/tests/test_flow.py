"""Network simplex vs exhaustive enumeration, plus format and edge cases."""

import itertools
import math

import numpy as np
import pytest

from amodkit.flow import (FlowNetwork, SolveStatus, check_flow, min_cost_flow,
                          solution_to_dimacs, to_dimacs)


def enumerate_min_cost(net: FlowNetwork):
    """Exhaustive search over all integral flows (meet-in-the-middle).

    Returns the optimal objective or None when no feasible flow exists.
    Capacities must be finite integers.
    """
    m = len(net.arcs)
    caps = [int(a[2]) for a in net.arcs]
    costs = [a[3] for a in net.arcs]
    half = m // 2

    def tabulate(indices):
        table = {}
        for combo in itertools.product(*[range(caps[k] + 1) for k in indices]):
            net_out = [0] * net.num_nodes
            cost = 0.0
            for k, f in zip(indices, combo):
                s, t = net.arcs[k][0], net.arcs[k][1]
                net_out[s] += f
                net_out[t] -= f
                cost += f * costs[k]
            key = tuple(net_out)
            if key not in table or cost < table[key]:
                table[key] = cost
        return table

    left = tabulate(range(half))
    right = tabulate(range(half, m))
    best = None
    supply = net.node_supply
    for key, cost_l in left.items():
        need = tuple(supply[i] - key[i] for i in range(net.num_nodes))
        cost_r = right.get(need)
        if cost_r is not None:
            total = cost_l + cost_r
            if best is None or total < best:
                best = total
    return best


def random_network(rng) -> FlowNetwork:
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 11))
    arcs = []
    for _ in range(m):
        s, t = rng.choice(n, size=2, replace=False)
        arcs.append((int(s), int(t), int(rng.integers(0, 5)), float(rng.integers(-4, 6))))
    b = rng.integers(-3, 4, size=n)
    b[-1] -= b.sum()
    return FlowNetwork(num_nodes=n, arcs=tuple(arcs),
                       node_supply=tuple(int(v) for v in b))


def test_single_arc_forced_flow():
    net = FlowNetwork(2, ((0, 1, 3, 2.0),), (3, -3))
    sol = min_cost_flow(net)
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.arc_flows.tolist() == [3.0]
    assert sol.objective == 6.0


def test_zero_supplies_zero_flow():
    net = FlowNetwork(3, ((0, 1, 5, 1.0), (1, 2, 5, 2.0), (2, 0, 5, 3.0)), (0, 0, 0))
    sol = min_cost_flow(net)
    assert sol.status is SolveStatus.OPTIMAL
    assert not sol.arc_flows.any()
    assert sol.objective == 0.0


def test_hundred_random_networks_match_enumeration():
    rng = np.random.default_rng(2024)
    optimal = infeasible = 0
    while optimal < 100:
        net = random_network(rng)
        expected = enumerate_min_cost(net)
        sol = min_cost_flow(net)
        if expected is None:
            assert sol.status is SolveStatus.INFEASIBLE
            infeasible += 1
            continue
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.objective == expected, f"{net}"
        assert np.array_equal(sol.arc_flows, np.round(sol.arc_flows))
        check_flow(net, sol)
        optimal += 1
    assert infeasible > 0  # the generator must exercise both branches


def test_supply_imbalance_rejected_before_solving():
    with pytest.raises(ValueError, match="sum"):
        FlowNetwork(2, ((0, 1, 1, 1.0),), (2, -1))


def test_self_loop_and_bad_arcs_rejected():
    with pytest.raises(ValueError, match="self-loop"):
        FlowNetwork(2, ((0, 0, 1, 1.0),), (0, 0))
    with pytest.raises(ValueError, match="capacity"):
        FlowNetwork(2, ((0, 1, -1, 1.0),), (0, 0))
    with pytest.raises(ValueError, match="cost"):
        FlowNetwork(2, ((0, 1, 1, math.inf),), (0, 0))


def test_infeasible_status():
    net = FlowNetwork(2, ((0, 1, 1, 1.0),), (2, -2))
    sol = min_cost_flow(net)
    assert sol.status is SolveStatus.INFEASIBLE
    assert not sol.optimal


def test_infinite_capacity_and_unbounded():
    net = FlowNetwork(2, ((0, 1, math.inf, 1.5),), (4, -4))
    sol = min_cost_flow(net)
    assert sol.objective == 6.0
    with pytest.raises(ValueError, match="unbounded"):
        min_cost_flow(FlowNetwork(2, ((0, 1, math.inf, -1.0), (1, 0, math.inf, 0.0)), (0, 0)))


def test_negative_cost_circulation():
    net = FlowNetwork(2, ((0, 1, 3, -2.0), (1, 0, math.inf, 1.0)), (0, 0))
    sol = min_cost_flow(net)
    assert sol.objective == -3.0
    check_flow(net, sol)


def test_deterministic_tie_breaking():
    # Two parallel zero-extra-cost routes: the lowest arc index must win.
    net = FlowNetwork(3, ((0, 1, 5, 1.0), (0, 2, 5, 0.0), (1, 2, 5, 0.0),
                          (0, 1, 5, 1.0)), (2, -2, 0))
    sols = [min_cost_flow(net) for _ in range(3)]
    for s in sols[1:]:
        assert np.array_equal(s.arc_flows, sols[0].arc_flows)
    assert sols[0].arc_flows[0] >= sols[0].arc_flows[3]


def test_fractional_capacities_lp_relaxation():
    net = FlowNetwork(3, ((0, 1, 1.5, -3.0), (0, 2, math.inf, 0.0),
                          (1, 2, math.inf, 0.0)), (2, 0, -2))
    sol = min_cost_flow(net)
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.arc_flows[0] == pytest.approx(1.5)
    assert sol.objective == pytest.approx(-4.5)


def test_dimacs_dump_roundtrip_text():
    net = FlowNetwork(3, ((0, 1, 2, 1.5), (1, 2, math.inf, -1.0)), (2, 0, -2))
    text = to_dimacs(net, comment="unit")
    lines = text.splitlines()
    assert lines[0] == "c unit"
    assert lines[1] == "p min 3 2"
    assert "n 1 2" in lines and "n 3 -2" in lines
    assert "a 1 2 0 2.0 1.5" in lines
    assert "a 2 3 0 inf -1.0" in lines
    sol = min_cost_flow(net)
    flow_text = solution_to_dimacs(net, sol)
    assert "f 1 2 2.0" in flow_text
    assert f"c objective {sol.objective!r}" in flow_text
