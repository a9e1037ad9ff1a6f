"""Small hand-built systems shared by the tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scuc_lab.powergrid import Generator, PowerNetwork, TransmissionLine, UCInstance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_gen(gid="g1", bus="1", pmin=10.0, pmax=100.0, segments=None, base=5.0, startup=7.0, ramp=None,
             up=1, down=1, initial=0) -> Generator:
    segments = segments if segments is not None else ((pmax - pmin, 2.0),)
    ramp = pmax if ramp is None else ramp
    return Generator(gid, bus, pmin, pmax, tuple(segments), base, startup, ramp, ramp, up, down, initial)


def line(lid, a, b, x=0.1, limit=1e4, climit=None) -> TransmissionLine:
    return TransmissionLine(lid, str(a), str(b), x, limit, limit if climit is None else climit)


def single_bus(generators, demand, reserve=None) -> UCInstance:
    demand = np.atleast_1d(np.asarray(demand, dtype=float))
    net = PowerNetwork(("1",), (), "1")
    reserve = np.zeros(demand.size) if reserve is None else reserve
    return UCInstance(net, tuple(generators), demand[None, :], reserve)


@pytest.fixture
def one_gen_instance() -> UCInstance:
    """Pmin 10, Pmax 100, c0 5, c1 2, cS 7, flat demand 50 over 24 periods."""
    return single_bus([make_gen()], np.full(24, 50.0))


def two_bus_instance(limit=1e4, T=3, demand=(60.0, 80.0, 70.0)) -> UCInstance:
    """Cheap unit at bus 1, expensive unit at bus 2 serving load at bus 2 across one line."""
    net = PowerNetwork(("1", "2"), (line("l1", 1, 2, 0.1, limit),), "2")
    gens = (make_gen("g1", "1", 0.0, 100.0, ((100.0, 1.0),), 0.0, 0.0),
            make_gen("g2", "2", 0.0, 100.0, ((100.0, 10.0),), 0.0, 0.0))
    d = np.zeros((2, T))
    d[1] = demand[:T]
    return UCInstance(net, gens, d, np.zeros(T))


def triangle_instance(limit=40.0, T=2) -> UCInstance:
    """Three buses, equal reactances; cheap unit at bus 1, load at bus 3."""
    lines = (line("a", 1, 2, 0.1, limit), line("b", 1, 3, 0.1, limit), line("c", 2, 3, 0.1, limit))
    net = PowerNetwork(("1", "2", "3"), lines, "3")
    gens = (make_gen("g1", "1", 0.0, 200.0, ((200.0, 1.0),), 0.0, 0.0),
            make_gen("g2", "3", 0.0, 200.0, ((200.0, 5.0),), 0.0, 0.0))
    d = np.zeros((3, T))
    d[2] = 90.0
    return UCInstance(net, gens, d, np.zeros(T))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
