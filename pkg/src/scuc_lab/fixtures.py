"""Synthetic desk-scale test systems and a reference hourly load profile.

The shipped JSON/CSV files under ``scuc_lab/data`` are produced by
:func:`write_fixtures`; :func:`load_fixture` reads the frozen copies.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .formulation import build_model
from .powergrid import Generator, PowerNetwork, TransmissionLine, UCInstance, load_instance, save_instance
from .sampling import fit_profile_stats, load_curve, read_profile_csv, stream, write_profile_csv, ProfileStats
from .sensitivity import sensitivity_for
from .solve import DEFAULT_BACKEND

FIXTURES = ("case6", "case14", "case30")

# typical winter weekday, normalized to a unit peak
DAILY_SHAPE = np.array([
    0.64, 0.61, 0.59, 0.58, 0.59, 0.63, 0.71, 0.80, 0.86, 0.88, 0.88, 0.87,
    0.86, 0.85, 0.85, 0.87, 0.92, 0.98, 1.00, 0.98, 0.94, 0.87, 0.78, 0.70,
])

CASE6_LINES = [
    (1, 2, 0.20), (1, 4, 0.20), (1, 5, 0.30), (2, 3, 0.25), (2, 4, 0.10), (2, 5, 0.30),
    (2, 6, 0.20), (3, 5, 0.26), (3, 6, 0.10), (4, 5, 0.40), (5, 6, 0.30),
]

CASE14_LINES = [
    (1, 2, 0.05917), (1, 5, 0.22304), (2, 3, 0.19797), (2, 4, 0.17632), (2, 5, 0.17388),
    (3, 4, 0.17103), (4, 5, 0.04211), (4, 7, 0.20912), (4, 9, 0.55618), (5, 6, 0.25202),
    (6, 11, 0.19890), (6, 12, 0.25581), (6, 13, 0.13027), (7, 8, 0.17615), (7, 9, 0.11001),
    (9, 10, 0.08450), (9, 14, 0.27038), (10, 11, 0.19207), (12, 13, 0.19988), (13, 14, 0.34802),
]

# (bus, kind) per generator; kinds index UNIT_KINDS
CASE6_UNITS = [(1, "base"), (2, "mid"), (3, "mid"), (6, "peak")]
CASE14_UNITS = [(1, "base"), (1, "mid"), (2, "base"), (3, "mid"), (6, "mid"), (8, "peak"), (14, "peak")]
CASE30_UNITS = [(1, "base"), (2, "base"), (5, "mid"), (11, "mid"), (17, "peak"), (22, "base"), (23, "peak"),
                (27, "mid"), (30, "peak")]

UNIT_KINDS = {
    # pmax range, pmin share, cost range, no-load cost per MW, startup per MW, ramp share, up/down hours, initially on
    "base": ((180, 260), 0.40, (14.0, 20.0), 2.0, 12.0, 0.50, 6, 1),
    "mid": ((80, 130), 0.30, (24.0, 34.0), 2.5, 9.0, 0.60, 3, 0),
    "peak": ((30, 60), 0.20, (45.0, 65.0), 3.0, 3.0, 1.00, 1, 0),
}


def case30_lines() -> list[tuple[int, int, float]]:
    """Ring of 28 buses with seeded chords, plus two radial buses (bridges)."""
    rng = stream(30, "topology")
    lines = [(i, i + 1, float(rng.uniform(0.05, 0.25))) for i in range(1, 28)]
    lines.append((28, 1, float(rng.uniform(0.05, 0.25))))
    seen = {tuple(sorted(l[:2])) for l in lines}
    while len(lines) < 40:
        a, b = sorted(int(v) for v in rng.integers(1, 29, size=2))
        if b - a < 3 or (a, b) in seen:
            continue
        seen.add((a, b))
        lines.append((a, b, float(rng.uniform(0.08, 0.35))))
    lines.append((27, 29, 0.12))
    lines.append((28, 30, 0.15))
    return lines


def reference_profile(days: int = 31) -> np.ndarray:
    rng = stream(2017, "reference-profile")
    level = rng.uniform(0.92, 1.08, size=(days, 1))
    noise = rng.normal(0.0, 0.015, size=(days, DAILY_SHAPE.size))
    return 10_000.0 * level * DAILY_SHAPE * (1.0 + noise)


def _fleet(units, seed: int) -> list[Generator]:
    rng = stream(seed, "fleet")
    gens = []
    for i, (bus, kind) in enumerate(units, start=1):
        (plo, phi), pmin_share, (clo, chi), noload, startup, ramp, updown, on = UNIT_KINDS[kind]
        pmax = float(round(rng.uniform(plo, phi)))
        pmin = round(pmin_share * pmax, 1)
        cost = float(round(rng.uniform(clo, chi), 2))
        span = pmax - pmin
        segments = ((round(span / 3, 4), cost), (round(span / 3, 4), round(cost * 1.05, 3)),
                    (round(span - 2 * round(span / 3, 4), 4), round(cost * 1.12, 3)))
        gens.append(Generator(
            id=f"g{i:02d}", bus=str(bus), min_power=pmin, max_power=pmax, segments=segments,
            base_cost=round(noload * pmax + pmin * cost, 1), startup_cost=round(startup * pmax, 1),
            ramp_up=round(ramp * pmax, 1), ramp_down=round(ramp * pmax, 1),
            min_up=updown, min_down=updown, initial_status=on,
        ))
    return gens


def _unconstrained(n_buses, lines, units, seed, slack=1) -> UCInstance:
    buses = tuple(str(b) for b in range(1, n_buses + 1))
    rng = stream(seed, "shares")
    weights = rng.uniform(0.5, 1.5, size=n_buses) * (rng.uniform(size=n_buses) < 0.8)
    shares = weights / weights.sum()
    gens = _fleet(units, seed)
    net = PowerNetwork(
        buses,
        tuple(TransmissionLine(f"l{i:02d}", str(a), str(b), x, 1e4, 1e4) for i, (a, b, x) in enumerate(lines, 1)),
        str(slack),
    )
    stats = fit_profile_stats(reference_profile())
    capacity = sum(g.max_power for g in gens)
    system = load_curve(stats.mean, 0.6 * capacity)
    return UCInstance(net, tuple(gens), np.outer(shares, system), np.zeros(system.size))


def calibrate_limits(instance: UCInstance, n_tight: int, tight: float = 0.85, loose: float = 1.6,
                     floor_share: float = 0.05) -> UCInstance:
    """Size line limits from the network-free optimal dispatch.

    Every line gets ``loose`` times its worst base/N-1 flow (at least ``floor_share`` of
    peak load); the ``n_tight`` most loaded lines get ``tight`` times, so they bind.
    """
    model = build_model(instance)
    res = DEFAULT_BACKEND.solve(model, 1e-4, 120.0)
    y = res.assignment[model.index.y]
    sens = sensitivity_for(instance.network)
    flows = np.abs(sens.all_flows(instance, y)).max(axis=(1, 2))
    floor = floor_share * instance.system_load.max()
    order = np.argsort(-flows, kind="stable")
    tight_set = set(order[:n_tight].tolist())
    lines = []
    for i, line in enumerate(instance.network.lines):
        factor = tight if i in tight_set else loose
        limit = float(round(max(factor * flows[i], floor), 1))
        lines.append(TransmissionLine(line.id, line.from_bus, line.to_bus, line.reactance, limit, limit))
    net = PowerNetwork(instance.network.buses, tuple(lines), instance.network.slack_bus)
    return instance.replace(network=net)


def build_fixture(name: str) -> UCInstance:
    if name == "case6":
        inst = _unconstrained(6, CASE6_LINES, CASE6_UNITS, 6)
        return calibrate_limits(inst, n_tight=2)
    if name == "case14":
        inst = _unconstrained(14, CASE14_LINES, CASE14_UNITS, 14)
        return calibrate_limits(inst, n_tight=3)
    if name == "case30":
        inst = _unconstrained(30, case30_lines(), CASE30_UNITS, 30)
        return calibrate_limits(inst, n_tight=4)
    raise KeyError(f"unknown fixture {name!r}")


def data_dir() -> Path:
    return Path(str(resources.files("scuc_lab") / "data"))


def write_fixtures(target: str | Path | None = None) -> None:
    target = Path(target) if target else data_dir()
    target.mkdir(parents=True, exist_ok=True)
    for name in FIXTURES:
        save_instance(build_fixture(name), target / f"{name}.json")
    write_profile_csv(reference_profile(), target / "profile.csv")


def fixture_path(name: str) -> Path:
    return data_dir() / f"{name}.json"


def load_fixture(name: str) -> UCInstance:
    return load_instance(fixture_path(name))


def reference_stats() -> ProfileStats:
    return fit_profile_stats(read_profile_csv(data_dir() / "profile.csv"))
