"""Data model, instance schema and structural validation for SCUC instances.

Power quantities are MW over one-hour periods, so MW and MWh coincide.
Periods are 0-based indices ``0..T-1`` throughout the package.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

FORMAT_TAG = "scuc-lab/1"


class ParseError(ValueError):
    """Instance file is not well-formed JSON or misses required keys."""


class ValidationError(ValueError):
    """A data-model invariant does not hold."""


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    normal_limit: float
    contingency_limit: float
    # per-outage overrides of ``contingency_limit``, keyed by outaged line id
    contingency_overrides: Mapping[str, float] = field(default_factory=dict)

    def limit(self, outage: str | None) -> float:
        if outage is None:
            return self.normal_limit
        return self.contingency_overrides.get(outage, self.contingency_limit)


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[str, ...]
    lines: tuple[TransmissionLine, ...]
    slack_bus: str

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def bus_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buses)}

    @property
    def line_index(self) -> dict[str, int]:
        return {l.id: i for i, l in enumerate(self.lines)}

    def validate(self) -> None:
        if len(set(self.buses)) != len(self.buses):
            raise ValidationError("duplicate bus id")
        if self.slack_bus not in self.buses:
            raise ValidationError(f"slack bus {self.slack_bus!r} is not a declared bus")
        ids = [l.id for l in self.lines]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate line id")
        known = set(self.buses)
        for line in self.lines:
            if line.from_bus not in known or line.to_bus not in known:
                raise ValidationError(f"line {line.id!r} has an undeclared endpoint")
            if line.from_bus == line.to_bus:
                raise ValidationError(f"line {line.id!r} is a self-loop")
            if not line.reactance > 0:
                raise ValidationError(f"line {line.id!r} has non-positive reactance {line.reactance}")
            if not line.normal_limit > 0:
                raise ValidationError(f"line {line.id!r} has non-positive normal limit")
            if not line.contingency_limit > 0 or any(v <= 0 for v in line.contingency_overrides.values()):
                raise ValidationError(f"line {line.id!r} has non-positive contingency limit")
            for outage in line.contingency_overrides:
                if outage not in ids:
                    raise ValidationError(f"line {line.id!r} overrides limit for unknown outage {outage!r}")
        if not is_connected(self.buses, [(l.from_bus, l.to_bus) for l in self.lines]):
            raise ValidationError("network is disconnected")


def is_connected(buses: Iterable[str], edges: Iterable[tuple[str, str]]) -> bool:
    buses = list(buses)
    if not buses:
        return False
    adj: dict[str, list[str]] = {b: [] for b in buses}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {buses[0]}
    queue = deque([buses[0]])
    while queue:
        for nxt in adj[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(buses)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    min_power: float
    max_power: float
    segments: tuple[tuple[float, float], ...]  # (size MW, marginal cost $/MWh)
    base_cost: float
    startup_cost: float
    ramp_up: float
    ramp_down: float
    min_up: int
    min_down: int
    initial_status: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((float(s), float(c)) for s, c in self.segments))

    @property
    def mean_marginal_cost(self) -> float:
        return float(np.mean([c for _, c in self.segments])) if self.segments else 0.0

    def validate(self, tol: float = 1e-6) -> None:
        if not 0 <= self.min_power <= self.max_power:
            raise ValidationError(f"generator {self.id!r}: need 0 <= min_power <= max_power")
        total = sum(s for s, _ in self.segments)
        span = self.max_power - self.min_power
        if abs(total - span) > tol * max(1.0, span):
            raise ValidationError(
                f"generator {self.id!r}: segment sizes sum to {total}, expected max_power - min_power = {span}"
            )
        if any(s < 0 for s, _ in self.segments):
            raise ValidationError(f"generator {self.id!r}: negative segment size")
        costs = [c for _, c in self.segments]
        if any(b < a for a, b in zip(costs, costs[1:])):
            raise ValidationError(f"generator {self.id!r}: segment costs are not nondecreasing")
        if self.ramp_up < 0 or self.ramp_down < 0:
            raise ValidationError(f"generator {self.id!r}: negative ramp limit")
        if int(self.min_up) != self.min_up or int(self.min_down) != self.min_down or self.min_up < 1 or self.min_down < 1:
            raise ValidationError(f"generator {self.id!r}: min up/down times must be integers >= 1")
        if self.initial_status not in (0, 1):
            raise ValidationError(f"generator {self.id!r}: initial_status must be 0 or 1")


@dataclass(frozen=True, eq=False)
class UCInstance:
    network: PowerNetwork
    generators: tuple[Generator, ...]
    demand: np.ndarray  # (n_buses, T), rows ordered as network.buses
    reserve: np.ndarray  # (T,)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        demand = np.array(self.demand, dtype=float)
        reserve = np.array(self.reserve, dtype=float)
        demand.setflags(write=False)
        reserve.setflags(write=False)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "reserve", reserve)

    @property
    def horizon(self) -> int:
        return int(self.reserve.shape[0])

    @property
    def system_load(self) -> np.ndarray:
        return self.demand.sum(axis=0)

    @property
    def capacity(self) -> float:
        return float(sum(g.max_power for g in self.generators))

    @property
    def max_segments(self) -> int:
        return max((len(g.segments) for g in self.generators), default=0)

    def generator_index(self) -> dict[str, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    def validate(self) -> None:
        self.network.validate()
        ids = [g.id for g in self.generators]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate generator id")
        known = set(self.network.buses)
        for g in self.generators:
            if g.bus not in known:
                raise ValidationError(f"generator {g.id!r} sits on undeclared bus {g.bus!r}")
            g.validate()
        T = self.horizon
        if T < 1:
            raise ValidationError("horizon must contain at least one period")
        if self.demand.shape != (len(self.network.buses), T):
            raise ValidationError(f"demand shape {self.demand.shape} does not match (buses, horizon)")
        if not np.all(np.isfinite(self.demand)) or np.any(self.demand < 0):
            raise ValidationError("demand must be finite and nonnegative")
        if not np.all(np.isfinite(self.reserve)) or np.any(self.reserve < 0):
            raise ValidationError("reserve must be finite and nonnegative")
        cap = self.capacity
        load = self.system_load
        worst = int(np.argmax(load)) if T else 0
        if load[worst] > cap * (1 + 1e-9):
            raise ValidationError(f"system load {load[worst]:.3f} at period {worst} exceeds total capacity {cap:.3f}")

    def replace(self, **changes) -> "UCInstance":
        fields = dict(network=self.network, generators=self.generators, demand=self.demand, reserve=self.reserve)
        fields.update(changes)
        return UCInstance(**fields)

    def to_dict(self) -> dict:
        return instance_to_dict(self)

    def fingerprint(self) -> str:
        """Hash of the base-system structure (network and generator set, costs excluded)."""
        net = self.network
        payload = {
            "buses": list(net.buses),
            "slack_bus": net.slack_bus,
            "lines": [_line_to_dict(l) for l in net.lines],
            "generators": [
                [g.id, g.bus, g.min_power, g.max_power, [s for s, _ in g.segments], g.ramp_up, g.ramp_down,
                 g.min_up, g.min_down, g.initial_status]
                for g in self.generators
            ],
            "horizon": self.horizon,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class UCSolution:
    commitment: np.ndarray  # x (G, T)
    startup: np.ndarray  # z (G, T)
    shutdown: np.ndarray  # w (G, T)
    production: np.ndarray  # y (G, T)
    segment_production: np.ndarray  # yk (G, K_max, T); padded segments are zero
    reserve: np.ndarray  # r (G, T)
    objective: float

    @classmethod
    def zeros(cls, instance: UCInstance) -> "UCSolution":
        G, T, K = len(instance.generators), instance.horizon, instance.max_segments
        z = np.zeros((G, T))
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros((G, K, T)), z.copy(), 0.0)

    def to_dict(self) -> dict:
        return {
            "commitment": self.commitment.astype(int).tolist(),
            "startup": self.startup.astype(int).tolist(),
            "shutdown": self.shutdown.astype(int).tolist(),
            "production": self.production.tolist(),
            "segment_production": self.segment_production.tolist(),
            "reserve": self.reserve.tolist(),
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UCSolution":
        return cls(
            np.asarray(d["commitment"], dtype=float),
            np.asarray(d["startup"], dtype=float),
            np.asarray(d["shutdown"], dtype=float),
            np.asarray(d["production"], dtype=float),
            np.asarray(d["segment_production"], dtype=float),
            np.asarray(d["reserve"], dtype=float),
            float(d["objective"]),
        )


@dataclass(frozen=True)
class ParameterVector:
    """Randomized scalars distinguishing one instance variation from another."""

    cost_multipliers: tuple[float, ...]  # per generator
    load_weights: tuple[float, ...]  # per bus, before normalization
    hourly_ratios: tuple[float, ...]  # T-1 hour-to-hour load ratios
    peak_fraction: float  # peak system load as a fraction of total capacity

    def __post_init__(self):
        for name in ("cost_multipliers", "load_weights", "hourly_ratios"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "peak_fraction", float(self.peak_fraction))
        if not np.all(np.isfinite(self.as_array())):
            raise ValidationError("parameter vector has non-finite entries")
        if not self.peak_fraction > 0:
            raise ValidationError("peak fraction must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([*self.cost_multipliers, *self.load_weights, *self.hourly_ratios, self.peak_fraction])

    def to_dict(self) -> dict:
        return {
            "cost_multipliers": list(self.cost_multipliers),
            "load_weights": list(self.load_weights),
            "hourly_ratios": list(self.hourly_ratios),
            "peak_fraction": self.peak_fraction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterVector":
        return cls(d["cost_multipliers"], d["load_weights"], d["hourly_ratios"], d["peak_fraction"])


@dataclass(frozen=True, order=True)
class ConstraintKey:
    """One transmission (outage=None) or N-1 security constraint at a period."""

    line: str
    outage: str | None
    period: int

    def sort_key(self) -> tuple[str, str, int]:
        return (self.line, self.outage or "", self.period)

    def to_list(self) -> list:
        return [self.line, self.outage, self.period]

    @classmethod
    def from_list(cls, v) -> "ConstraintKey":
        return cls(str(v[0]), None if v[1] is None else str(v[1]), int(v[2]))


def sorted_keys(keys: Iterable[ConstraintKey]) -> list[ConstraintKey]:
    return sorted(keys, key=ConstraintKey.sort_key)


# ---------------------------------------------------------------- schema I/O


def _line_to_dict(line: TransmissionLine) -> dict:
    d = {
        "id": line.id,
        "from": line.from_bus,
        "to": line.to_bus,
        "reactance": line.reactance,
        "normal_limit": line.normal_limit,
        "contingency_limit": line.contingency_limit,
    }
    if line.contingency_overrides:
        d["contingency_limit"] = {"default": line.contingency_limit, **dict(line.contingency_overrides)}
    return d


def instance_to_dict(instance: UCInstance) -> dict:
    net = instance.network
    return {
        "format": FORMAT_TAG,
        "buses": list(net.buses),
        "slack_bus": net.slack_bus,
        "lines": [_line_to_dict(l) for l in net.lines],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "min_power": g.min_power,
                "max_power": g.max_power,
                "segments": [[s, c] for s, c in g.segments],
                "base_cost": g.base_cost,
                "startup_cost": g.startup_cost,
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "min_up": g.min_up,
                "min_down": g.min_down,
                "initial_status": g.initial_status,
            }
            for g in instance.generators
        ],
        "demand": {b: instance.demand[i].tolist() for i, b in enumerate(net.buses)},
        "reserve": instance.reserve.tolist(),
    }


def instance_from_dict(data: Mapping, validate: bool = True) -> UCInstance:
    if not isinstance(data, Mapping):
        raise ParseError("instance document must be a JSON object")
    if data.get("format") != FORMAT_TAG:
        raise ParseError(f"missing or unsupported format tag (expected {FORMAT_TAG!r})")
    try:
        buses = [str(b) for b in data["buses"]]
        lines = []
        for d in data["lines"]:
            climit = d.get("contingency_limit", d["normal_limit"])
            overrides = {}
            if isinstance(climit, Mapping):
                overrides = {str(k): float(v) for k, v in climit.items() if k != "default"}
                climit = climit.get("default", d["normal_limit"])
            lines.append(
                TransmissionLine(
                    id=str(d["id"]),
                    from_bus=str(d["from"]),
                    to_bus=str(d["to"]),
                    reactance=float(d["reactance"]),
                    normal_limit=float(d["normal_limit"]),
                    contingency_limit=float(climit),
                    contingency_overrides=overrides,
                )
            )
        generators = [
            Generator(
                id=str(d["id"]),
                bus=str(d["bus"]),
                min_power=float(d["min_power"]),
                max_power=float(d["max_power"]),
                segments=tuple((float(s), float(c)) for s, c in d["segments"]),
                base_cost=float(d["base_cost"]),
                startup_cost=float(d["startup_cost"]),
                ramp_up=float(d["ramp_up"]),
                ramp_down=float(d["ramp_down"]),
                min_up=int(d["min_up"]),
                min_down=int(d["min_down"]),
                initial_status=int(d.get("initial_status", 0)),
            )
            for d in data["generators"]
        ]
        reserve = [float(v) for v in data["reserve"]]
        demand_map = data["demand"]
        missing = [b for b in buses if b not in demand_map]
        if missing:
            raise ParseError(f"demand missing for buses {missing}")
        unknown = [b for b in demand_map if b not in buses]
        if unknown:
            raise ValidationError(f"demand given for undeclared buses {unknown}")
        demand = [[float(v) for v in demand_map[b]] for b in buses]
        if any(len(row) != len(reserve) for row in demand):
            raise ValidationError("every demand series must have as many periods as the reserve series")
        network = PowerNetwork(tuple(buses), tuple(lines), str(data["slack_bus"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed instance: {exc!r}") from exc
    instance = UCInstance(network, tuple(generators), np.array(demand, dtype=float).reshape(len(buses), len(reserve)),
                          np.array(reserve))
    if validate:
        instance.validate()
    return instance


def load_instance(path: str | Path) -> UCInstance:
    """Read and validate an instance JSON document."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return instance_from_dict(data)


def save_instance(instance: UCInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1), encoding="utf-8")


# ---------------------------------------------------------------- solution checking


@dataclass
class Violation:
    family: str
    where: tuple
    amount: float


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def worst(self, family: str) -> float:
        return max((v.amount for v in self.violations if v.family == family), default=0.0)

    def summary(self) -> dict[str, float]:
        return {f: self.worst(f) for f in sorted(self.families)}


def validate_solution(
    instance: UCInstance,
    sol: UCSolution,
    tol: float = 1e-6,
    flow_keys: Iterable[ConstraintKey] | None = None,
) -> FeasibilityReport:
    """Check a solution against every constraint family of the formulation.

    A constraint counts as violated when its excess exceeds ``tol * max(1, scale)``,
    ``scale`` being the magnitude of its right-hand side. Flow constraints are checked
    for every (line, outage, period) unless ``flow_keys`` restricts the check.
    """
    from .sensitivity import sensitivity_for  # deferred: sensitivity imports this module

    G, T = len(instance.generators), instance.horizon
    K = instance.max_segments
    shapes = {
        "commitment": (G, T), "startup": (G, T), "shutdown": (G, T), "production": (G, T), "reserve": (G, T),
    }
    for name, shape in shapes.items():
        if getattr(sol, name).shape != shape:
            raise ValueError(f"solution {name} has shape {getattr(sol, name).shape}, expected {shape}")
    if sol.segment_production.shape != (G, K, T):
        raise ValueError(f"segment_production has shape {sol.segment_production.shape}, expected {(G, K, T)}")

    report = FeasibilityReport()

    def check(family: str, where: tuple, excess: float, scale: float = 1.0) -> None:
        if excess > tol * max(1.0, abs(scale)):
            report.violations.append(Violation(family, where, float(excess)))

    x, z, w, y, yk, r = sol.commitment, sol.startup, sol.shutdown, sol.production, sol.segment_production, sol.reserve
    for name, arr in (("commitment", x), ("startup", z), ("shutdown", w)):
        dev = np.abs(arr - np.round(arr))
        bad = (dev > tol) | (np.round(arr) < 0) | (np.round(arr) > 1)
        for g, t in zip(*np.nonzero(bad)):
            report.violations.append(Violation("integrality", (name, g, t), float(max(dev[g, t], abs(arr[g, t] - 0.5) - 0.5))))
    for name, arr in (("production", y), ("reserve", r), ("segment_production", yk)):
        for idx in zip(*np.nonzero(arr < 0)):
            check("nonnegativity", (name, *idx), -float(arr[idx]))

    load = instance.system_load
    for t in range(T):
        check("balance", (t,), abs(y[:, t].sum() - load[t]), load[t])
        check("reserve", (t,), instance.reserve[t] - r[:, t].sum(), instance.reserve[t])

    for gi, g in enumerate(instance.generators):
        span = g.max_power - g.min_power
        for t in range(T):
            lhs = yk[gi, :, t].sum() + r[gi, t]
            if t < T - 1:
                w_next = w[gi, t + 1]
                if g.min_up > 1:
                    rhs = span * x[gi, t] - (g.max_power - g.ramp_up) * z[gi, t] - (g.max_power - g.ramp_down) * w_next
                    check("capacity", (g.id, t), lhs - rhs, g.max_power)
                else:
                    rhs1 = span * x[gi, t] - (g.max_power - g.ramp_up) * z[gi, t] - max(g.ramp_up - g.ramp_down, 0) * w_next
                    rhs2 = span * x[gi, t] - (g.max_power - g.ramp_down) * w_next - max(g.ramp_down - g.ramp_up, 0) * z[gi, t]
                    check("capacity", (g.id, t), lhs - min(rhs1, rhs2), g.max_power)
            else:
                rhs = span * x[gi, t] - (g.max_power - g.ramp_up) * z[gi, t]
                check("capacity", (g.id, t), lhs - rhs, g.max_power)
            if t >= 1:
                check("ramp_up", (g.id, t), y[gi, t] - y[gi, t - 1] - g.ramp_up, g.ramp_up)
                check("ramp_down", (g.id, t), y[gi, t - 1] - y[gi, t] - g.ramp_down, g.ramp_down)
            lo = max(0, t - g.min_up + 1)
            check("min_up", (g.id, t), z[gi, lo:t + 1].sum() - x[gi, t])
            lo = max(0, t - g.min_down + 1)
            lag = t - g.min_down
            prior = x[gi, lag] if lag >= 0 else g.initial_status
            check("min_down", (g.id, t), z[gi, lo:t + 1].sum() - (1 - prior))
            for k, (size, _) in enumerate(g.segments):
                check("segment", (g.id, k, t), yk[gi, k, t] - size, size)
            for k in range(len(g.segments), K):
                check("segment", (g.id, k, t), yk[gi, k, t], 1.0)
            check("link_production", (g.id, t), abs(y[gi, t] - g.min_power * x[gi, t] - yk[gi, :, t].sum()), g.max_power)
            prev = x[gi, t - 1] if t >= 1 else g.initial_status
            check("link_status", (g.id, t), abs(x[gi, t] - prev - (z[gi, t] - w[gi, t])))

    sens = sensitivity_for(instance.network)
    flows = sens.all_flows(instance, y)  # (L, L+1, T); scenario 0 is the base case
    limits = sens.limit_matrix()  # (L, L+1)
    excess = np.abs(flows) - limits[:, :, None]
    if flow_keys is None:
        mask = sens.monitored_mask()[:, :, None] & (excess > tol * np.maximum(1.0, limits)[:, :, None])
        for l, c, t in zip(*np.nonzero(mask)):
            key = sens.key(l, c, t)
            report.violations.append(Violation("flow_base" if key.outage is None else "flow_contingency",
                                               (key.line, key.outage, key.period), float(excess[l, c, t])))
    else:
        for key in flow_keys:
            l, c = sens.line_pos[key.line], sens.scenario_pos(key.outage)
            check("flow_base" if key.outage is None else "flow_contingency",
                  (key.line, key.outage, key.period), excess[l, c, key.period], limits[l, c])
    return report
