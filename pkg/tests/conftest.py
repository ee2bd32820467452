from dataclasses import replace

import numpy as np
import pytest

from parcelcast import datastore, pipeline, simnet
from parcelcast.simnet import Event, ParcelRecord


@pytest.fixture(scope="session")
def demo_network():
    return simnet.build_network(simnet.load_network_spec(pipeline.demo_path("demo_network.ini")))


@pytest.fixture(scope="session")
def demo_sim_config():
    return simnet.load_sim_config(pipeline.demo_path("demo_sim.ini"))


@pytest.fixture(scope="session")
def small_log(demo_network, demo_sim_config):
    """Four simulated days on the demo network."""
    cfg = replace(demo_sim_config, horizon_days=4, seed=11)
    records = simnet.simulate(demo_network, cfg)
    return datastore.EventLog(records, end=4 * 1440, start_weekday=cfg.start_weekday, hubs=demo_network.hubs)


def make_parcel(pid, order_time, path, times, end=None):
    """Hand-built record: ``times`` alternates hub dwell and route travel minutes along ``path``.

    Events past ``end`` are cut the same way the simulator does it.
    """
    events, clock = [], order_time
    locations = []
    for k, hub in enumerate(path):
        locations.append(hub)
        if k + 1 < len(path):
            locations.append(simnet.route_id(hub, path[k + 1]))
    durations = list(times) + [None]
    for loc, dur in zip(locations, durations):
        if end is not None and clock >= end:
            break
        dep = None if dur is None else clock + dur
        if dep is not None and end is not None and dep >= end:
            dep = None
        events.append(Event(loc, clock, dep))
        if dep is None:
            break
        clock = dep
    return ParcelRecord(pid, order_time, path[0], path[-1], tuple(path), tuple(events))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def week_log_path(demo_network, demo_sim_config, tmp_path_factory):
    """Seven simulated days written to disk in the event-log format."""
    cfg = replace(demo_sim_config, horizon_days=7, seed=5)
    records = simnet.simulate(demo_network, cfg)
    path = tmp_path_factory.mktemp("week") / "events.tsv"
    simnet.write_log(path, records, 7 * 1440, cfg.seed, cfg.start_weekday)
    return path


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
