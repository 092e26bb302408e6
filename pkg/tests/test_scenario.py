"""Scenario loading, synthetic generation, demand sampling, disturbances."""

import json

import numpy as np
import pytest

from amodkit import (City, Disturbance, DisturbanceKind, ScenarioError,
                     SynthCityParams, apply_disturbance, generate_synthetic_city,
                     load_disturbances, load_scenario, sample_demand, save_scenario)

MINIMAL = {
    "id": "two-node",
    "num_stations": 2,
    "adjacency": [[0, 0], [0, 1], [1, 0], [1, 1]],
    "travel_time": [[1, 2], [2, 1]],
    "price": [[0.0, 3.0], [2.5, 0.0]],
    "cost": [[0.0, 1.0], [1.0, 0.0]],
    "demand_rate": [[0.0, 1.5], [0.5, 0.0]],
    "fleet_size": 4,
    "episode_length": 5,
    "step_minutes": 15.0,
}


def _write(tmp_path, doc, name="scen.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_load_minimal_two_node(tmp_path):
    city = load_scenario(_write(tmp_path, MINIMAL))
    assert city.num_stations == 2
    assert city.travel_time.shape == (2, 2, 5)
    assert city.price[0, 1, 3] == 3.0
    assert city.adjacency.all()


def test_load_rejects_zero_travel_time(tmp_path):
    doc = dict(MINIMAL, travel_time=[[1, 0], [2, 1]])
    with pytest.raises(ScenarioError, match="travel_time"):
        load_scenario(_write(tmp_path, doc))


def test_load_rejects_missing_key_and_bad_json(tmp_path):
    doc = {k: v for k, v in MINIMAL.items() if k != "price"}
    with pytest.raises(ScenarioError, match="price"):
        load_scenario(_write(tmp_path, doc))
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ScenarioError, match="JSON"):
        load_scenario(bad)


def test_load_rejects_disconnected(tmp_path):
    doc = dict(MINIMAL, adjacency=[[0, 0], [1, 1]])
    with pytest.raises(ScenarioError, match="connected"):
        load_scenario(_write(tmp_path, doc))


def test_load_rejects_negative_rate(tmp_path):
    doc = dict(MINIMAL, demand_rate=[[0.0, -1.0], [0.5, 0.0]])
    with pytest.raises(ScenarioError, match=r"demand_rate\[0, 1, 0\]"):
        load_scenario(_write(tmp_path, doc))


def test_full_time_varying_load(tmp_path):
    tt = np.ones((2, 2, 5), dtype=int).tolist()
    doc = dict(MINIMAL, travel_time=tt)
    city = load_scenario(_write(tmp_path, doc))
    assert city.travel_time.shape == (2, 2, 5)


def test_roundtrip_identity(tmp_path):
    params = SynthCityParams(node_range=(5, 8), demand_per_hour=(100, 300),
                             fleet_range=(10, 30), episode_length=12)
    city = generate_synthetic_city(params, seed=11)
    path = tmp_path / "c.json"
    save_scenario(city, path)
    loaded = load_scenario(path)
    assert loaded.id == city.id
    assert loaded.fleet_size == city.fleet_size
    for f in ("adjacency", "travel_time", "price", "cost", "demand_rate"):
        assert np.array_equal(getattr(loaded, f), getattr(city, f)), f


def test_generator_deterministic():
    params = SynthCityParams()
    a = generate_synthetic_city(params, seed=0)
    b = generate_synthetic_city(params, seed=0)
    assert a.num_stations == b.num_stations
    for f in ("adjacency", "travel_time", "price", "cost", "demand_rate"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    c = generate_synthetic_city(params, seed=1)
    assert not np.array_equal(a.demand_rate, c.demand_rate)


def test_generator_node_range_over_seeds():
    # Default node range mirrors the real scenario statistics (10-23 stations).
    params = SynthCityParams()
    assert params.node_range == (10, 23)
    assert params.fleet_range == (79, 2729)
    for seed in range(100):
        city = generate_synthetic_city(params, seed=seed)
        assert 10 <= city.num_stations <= 23
        assert 79 <= city.fleet_size <= 2729


def _bfs_reaches_all(adj: np.ndarray, start: int) -> bool:
    seen = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        for v in np.nonzero(adj[u])[0]:
            if int(v) not in seen:
                seen.add(int(v))
                frontier.append(int(v))
    return len(seen) == adj.shape[0]


def test_generator_connectivity_bfs_oracle():
    params = SynthCityParams(node_range=(5, 12), edge_prob=0.05,
                             demand_per_hour=(100, 200), fleet_range=(20, 40))
    for seed in range(30):
        city = generate_synthetic_city(params, seed=seed)
        for start in range(city.num_stations):
            assert _bfs_reaches_all(city.adjacency, start)


def test_generator_profitable_fraction():
    params = SynthCityParams(node_range=(10, 10), profitable_fraction=0.8)
    city = generate_synthetic_city(params, seed=4)
    frac = float((city.price[:, :, 0] >= city.cost[:, :, 0]).mean())
    assert frac == pytest.approx(0.8, abs=0.01)


def test_generator_rejects_degenerate_range():
    with pytest.raises(ScenarioError, match="degenerate"):
        SynthCityParams(node_range=(8, 4))


# -- demand sampling ---------------------------------------------------------


def _zero_rate_city() -> City:
    n, t = 3, 6
    return City(id="z", num_stations=n, adjacency=np.ones((n, n), bool),
                travel_time=np.ones((n, n, t), np.int64),
                price=np.ones((n, n, t)), cost=np.ones((n, n, t)),
                demand_rate=np.zeros((n, n, t)), fleet_size=5, episode_length=t)


def test_sample_demand_zero_rate():
    city = _zero_rate_city()
    d = sample_demand(city, 0, np.random.default_rng(0))
    assert d.dtype == np.int64
    assert not d.any()


def test_sample_demand_monte_carlo_mean():
    n, t = 2, 1
    rate = np.zeros((n, n, t))
    rate[0, 1, 0] = 2.0
    city = City(id="mc", num_stations=n, adjacency=np.ones((n, n), bool),
                travel_time=np.ones((n, n, t), np.int64), price=np.ones((n, n, t)),
                cost=np.zeros((n, n, t)), demand_rate=rate, fleet_size=1,
                episode_length=t)
    rng = np.random.default_rng(123)
    draws = np.array([sample_demand(city, 0, rng)[0, 1] for _ in range(100_000)])
    # Poisson(2): sigma of the sample mean is sqrt(2/1e5).
    assert abs(draws.mean() - 2.0) < 3 * np.sqrt(2.0 / 100_000)
    assert abs(draws.var() - 2.0) < 0.1


def test_sample_demand_deterministic_replay():
    city = generate_synthetic_city(SynthCityParams(node_range=(5, 5)), seed=2)
    d1 = sample_demand(city, 3, np.random.default_rng(42))
    d2 = sample_demand(city, 3, np.random.default_rng(42))
    assert np.array_equal(d1, d2)


def test_sample_demand_bad_t():
    city = _zero_rate_city()
    with pytest.raises(ValueError):
        sample_demand(city, 6, np.random.default_rng(0))


def test_sample_demand_entrywise_mean_sanity():
    # Empirical per-entry means stay within 3 standard errors of the rates.
    params = SynthCityParams(node_range=(4, 4), demand_per_hour=(200, 300),
                             fleet_range=(10, 10), episode_length=3)
    city = generate_synthetic_city(params, seed=9)
    rng = np.random.default_rng(7)
    m = 4000
    total = np.zeros((4, 4))
    for _ in range(m):
        total += sample_demand(city, 0, rng)
    lam = city.demand_rate[:, :, 0]
    se = np.sqrt(np.maximum(lam, 1e-12) / m)
    mask = lam > 0
    assert np.all(np.abs(total / m - lam)[mask] <= 3 * se[mask] + 1e-9)


# -- disturbances ------------------------------------------------------------


def _city_for_disturbance() -> City:
    params = SynthCityParams(node_range=(5, 5), demand_per_hour=(150, 250),
                             fleet_range=(12, 12), episode_length=8)
    return generate_synthetic_city(params, seed=21)


def test_disturbance_identity_multiplier():
    city = _city_for_disturbance()
    d = Disturbance(kind=DisturbanceKind.SPECIAL_EVENT, target_stations=(1,),
                    multiplier=1.0, window=(0, 8), background_multiplier=1.0)
    out = apply_disturbance(city, d)
    assert np.array_equal(out.demand_rate, city.demand_rate)
    assert np.array_equal(out.price, city.price)


def test_congestion_scales_inbound_only():
    city = _city_for_disturbance()
    k = 2
    d = Disturbance(kind=DisturbanceKind.CONGESTION, target_stations=(k,),
                    multiplier=4.0, window=(0, city.episode_length))
    out = apply_disturbance(city, d)
    expect_in = np.ceil(city.travel_time[:, k, :] * 4.0).astype(np.int64)
    assert np.array_equal(out.travel_time[:, k, :], expect_in)
    for j in range(city.num_stations):
        if j != k:
            assert np.array_equal(out.travel_time[k, j, :], city.travel_time[k, j, :])
    # original untouched
    assert city.travel_time[0, k, 0] * 4 == out.travel_time[0, k, 0]


def test_price_change_scales_row_and_column():
    city = _city_for_disturbance()
    k = 3
    d = Disturbance(kind=DisturbanceKind.PRICE_CHANGE, target_stations=(k,),
                    multiplier=0.2, window=(0, city.episode_length))
    out = apply_disturbance(city, d)
    assert np.allclose(out.price[k, :, :], city.price[k, :, :] * 0.2)
    assert np.allclose(out.price[:, k, :], city.price[:, k, :] * 0.2)
    untouched = [i for i in range(city.num_stations) if i != k]
    sub = np.ix_(untouched, untouched)
    assert np.array_equal(out.price[sub], city.price[sub])


def test_special_event_window_and_background():
    city = _city_for_disturbance()
    d = Disturbance(kind=DisturbanceKind.SPECIAL_EVENT, target_stations=(0,),
                    multiplier=5.0, window=(2, 5), background_multiplier=0.8)
    out = apply_disturbance(city, d)
    assert np.allclose(out.demand_rate[0, 1, 2:5], city.demand_rate[0, 1, 2:5] * 5.0)
    assert np.allclose(out.demand_rate[1, 0, 2:5], city.demand_rate[1, 0, 2:5] * 5.0)
    assert np.allclose(out.demand_rate[1, 2, 2:5], city.demand_rate[1, 2, 2:5] * 0.8)
    assert np.array_equal(out.demand_rate[:, :, :2], city.demand_rate[:, :, :2])
    assert np.array_equal(out.demand_rate[:, :, 5:], city.demand_rate[:, :, 5:])


def test_disturbance_inverse_recovers_city():
    city = _city_for_disturbance()
    for kind in (DisturbanceKind.SPECIAL_EVENT, DisturbanceKind.PRICE_CHANGE):
        d = Disturbance(kind=kind, target_stations=(1, 4), multiplier=2.0,
                        window=(0, city.episode_length))
        inv = Disturbance(kind=kind, target_stations=(1, 4), multiplier=0.5,
                          window=(0, city.episode_length))
        back = apply_disturbance(apply_disturbance(city, d), inv)
        field = "demand_rate" if kind is DisturbanceKind.SPECIAL_EVENT else "price"
        assert np.allclose(getattr(back, field), getattr(city, field), rtol=1e-12)


def test_disturbance_empty_targets_rejected():
    with pytest.raises(ScenarioError, match="empty"):
        Disturbance(kind=DisturbanceKind.CONGESTION, target_stations=(),
                    multiplier=4.0, window=(0, 5))


def test_load_disturbances(tmp_path):
    doc = [{"kind": "congestion", "target_stations": [2], "multiplier": 4.0,
            "window": [0, 20]},
           {"kind": "special_event", "target_stations": [0, 1], "multiplier": 3.0,
            "window": [5, 15], "background_multiplier": 0.8}]
    p = tmp_path / "dist.json"
    p.write_text(json.dumps(doc))
    ds = load_disturbances(p)
    assert len(ds) == 2
    assert ds[0].kind is DisturbanceKind.CONGESTION
    assert ds[1].background_multiplier == 0.8
    with pytest.raises(ScenarioError):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([{"kind": "tsunami", "target_stations": [0],
                                    "multiplier": 2, "window": [0, 1]}]))
        load_disturbances(bad)
