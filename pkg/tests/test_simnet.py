import hashlib
from collections import deque
from dataclasses import replace

import numpy as np
import pytest

from parcelcast import simnet
from parcelcast.errors import ConfigError, DataError
from parcelcast.simnet import Hub, NetworkSpec


def tree_spec():
    hubs = [Hub("G", "gateway"), Hub("L1", "local"), Hub("L2", "local"),
            Hub("A1", "access"), Hub("A2", "access"), Hub("A3", "access"), Hub("A4", "access")]
    links = [("A1", "L1", 10.0), ("A2", "L1", 12.0), ("A3", "L2", 9.0), ("A4", "L2", 11.0),
             ("L1", "G", 30.0), ("L2", "G", 25.0)]
    return NetworkSpec(hubs, links)


def bfs_reachable(routes, origin):
    seen, queue = {origin}, deque([origin])
    while queue:
        h = queue.popleft()
        for (a, b) in routes:
            if a == h and b not in seen:
                seen.add(b)
                queue.append(b)
    return seen


class TestBuildNetwork:
    def test_tree_counts(self):
        net = simnet.build_network(tree_spec())
        assert len(net.hubs) == 7
        assert len(net.routes) == 12

    def test_unknown_hub(self):
        spec = tree_spec()
        spec = NetworkSpec(spec.hubs, spec.links + [("A1", "ZZ", 5.0)])
        with pytest.raises(ConfigError, match="unknown hub"):
            simnet.build_network(spec)

    def test_disconnected_names_pair(self):
        spec = tree_spec()
        spec = NetworkSpec(spec.hubs, [l for l in spec.links if l[:2] != ("A4", "L2")])
        with pytest.raises(ConfigError, match="A4"):
            simnet.build_network(spec)

    def test_kind_minimums(self):
        spec = NetworkSpec([Hub("G", "gateway"), Hub("L", "local"), Hub("A", "access")],
                           [("A", "L", 1.0), ("L", "G", 1.0)])
        with pytest.raises(ConfigError):
            simnet.build_network(spec)

    def test_demo_paths_cross_a_local_hub(self, demo_network):
        access = demo_network.hubs_of_kind("access")
        for o in access:
            reach = bfs_reachable(demo_network.routes, o)
            for d in access:
                if o == d:
                    continue
                assert d in reach
                path = demo_network.path(o, d)
                assert path[0] == o and path[-1] == d
                assert any(demo_network.hubs[h].kind == "local" for h in path[1:-1])
                assert len(set(path)) == len(path)
                for a, b in zip(path[:-1], path[1:]):
                    assert (a, b) in demo_network.routes

    def test_paths_are_shortest(self, demo_network):
        # brute-force all simple paths on the small demo graph
        def simple_paths(o, d, seen):
            if o == d:
                yield (d,)
                return
            for (a, b) in demo_network.routes:
                if a == o and b not in seen:
                    for rest in simple_paths(b, d, seen | {b}):
                        yield (o,) + rest

        def cost(p):
            return sum(demo_network.routes[(a, b)].base_travel_minutes for a, b in zip(p[:-1], p[1:]))

        for o, d in [("A1", "A5"), ("A2", "A3"), ("A9", "A4")]:
            best = min(cost(p) for p in simple_paths(o, d, {o}))
            assert cost(demo_network.path(o, d)) == pytest.approx(best)

    def test_missing_path(self, demo_network):
        with pytest.raises(DataError):
            demo_network.path("A1", "nowhere")


class TestSimulate:
    def test_zero_demand(self, demo_network, demo_sim_config):
        cfg = replace(demo_sim_config, base_rate_per_day=0.0, horizon_days=2)
        assert simnet.simulate(demo_network, cfg) == []

    def test_deterministic_bytes(self, demo_network, demo_sim_config):
        cfg = replace(demo_sim_config, horizon_days=2)
        a = simnet.format_log(simnet.simulate(demo_network, cfg), 2880, cfg.seed)
        b = simnet.format_log(simnet.simulate(demo_network, cfg), 2880, cfg.seed)
        assert hashlib.sha256(a.encode()).digest() == hashlib.sha256(b.encode()).digest()

    def test_seed_changes_log(self, demo_network, demo_sim_config):
        cfg = replace(demo_sim_config, horizon_days=1)
        a = simnet.simulate(demo_network, cfg)
        b = simnet.simulate(demo_network, replace(cfg, seed=cfg.seed + 1))
        assert simnet.format_log(a, 1440) != simnet.format_log(b, 1440)

    def test_events_follow_path(self, small_log):
        completed = [r for r in small_log.records if r.completed]
        assert len(completed) > 1000
        for r in small_log.records:
            locs = [e.location for e in r.events]
            expected = []
            for k, h in enumerate(r.path):
                expected.append(h)
                if k + 1 < len(r.path):
                    expected.append(simnet.route_id(h, r.path[k + 1]))
            if r.completed:
                assert locs == expected
            else:
                assert locs == expected[:len(locs)]
            hubs = [l for l in locs if not simnet.is_route(l)]
            assert len(hubs) == len(set(hubs))

    def test_times_ordered_and_positive(self, small_log):
        for r in small_log.records:
            assert r.order_time <= r.events[0].arrival
            for e in r.events:
                if e.departure is not None:
                    assert e.departure > e.arrival
            for e1, e2 in zip(r.events[:-1], r.events[1:]):
                assert e1.departure == e2.arrival
            assert r.events[-1].arrival < small_log.end

    def test_sorted_by_order_time(self, small_log):
        times = [r.order_time for r in small_log.records]
        assert times == sorted(times)

    def test_in_transit_only_near_end(self, small_log):
        for r in small_log.records:
            if r.in_transit:
                assert r.events[-1].departure is None

    @pytest.mark.parametrize("k", [1.0, 1.5, 3.0])
    def test_monotone_load(self, demo_network, demo_sim_config, k):
        cfg = replace(demo_sim_config, horizon_days=1)
        base = len(simnet.simulate(demo_network, cfg))
        assert len(simnet.simulate(demo_network, cfg.scaled(k))) >= base

    def test_weights_unknown_hub(self, demo_network, demo_sim_config):
        cfg = replace(demo_sim_config, origin_weight={"nope": 1.0})
        with pytest.raises(ConfigError):
            simnet.simulate(demo_network, cfg)

    def test_no_routes_with_demand(self, demo_sim_config):
        net = simnet.Network({"A": Hub("A", "access")}, {}, {})
        with pytest.raises(ConfigError):
            simnet.simulate(net, replace(demo_sim_config, horizon_days=1))

    def test_daily_shape(self, small_log):
        # overnight orders are rarer than daytime orders in the demo profile
        minute = np.array([r.order_time % 1440 for r in small_log.records])
        night = np.sum(minute < 300)
        day = np.sum((minute >= 600) & (minute < 900))
        assert day > 3 * night


class TestLogFormat:
    def test_round_trip(self, small_log, tmp_path):
        path = tmp_path / "log.tsv"
        simnet.write_log(path, small_log.records, small_log.end, seed=11)
        records, meta = simnet.read_log(path)
        assert meta["end"] == small_log.end and meta["seed"] == 11
        assert records == small_log.records

    def test_header(self, small_log):
        text = simnet.format_log(small_log.records[:3], small_log.end, seed=5, start_weekday=2)
        assert text.splitlines()[0].startswith("# " + simnet.LOG_FORMAT)
        assert "weekday=2" in text.splitlines()[0]

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("# something else\n")
        with pytest.raises(DataError):
            simnet.read_log(path)


class TestConfigFiles:
    def test_demo_loads(self, demo_sim_config):
        assert demo_sim_config.horizon_days == 30
        assert demo_sim_config.interval_minutes == 15
        assert demo_sim_config.seed == 7

    def test_seed_override(self):
        from parcelcast import pipeline

        cfg = simnet.load_sim_config(pipeline.demo_path("demo_sim.ini"), seed=99)
        assert cfg.seed == 99

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            simnet.load_sim_config(tmp_path / "missing.ini")

    def test_bad_interval(self, demo_sim_config):
        with pytest.raises(ConfigError):
            replace(demo_sim_config, interval_minutes=7).validate()

    def test_piecewise_linear(self):
        knots = ((0.0, 1.0), (12.0, 3.0), (24.0, 1.0))
        np.testing.assert_allclose(simnet.piecewise_linear(knots, np.array([0, 6, 12, 18])), [1, 2, 3, 2])
