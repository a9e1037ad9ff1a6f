"""Seeded generation of instance variations from a base system.

Randomness comes from numpy's counter-based Philox generator. Every quantity
(cost, load, profile, peak) draws from its own stream whose 128-bit key is the
first 16 bytes of ``sha256(f"scuc-lab:{seed}:{label}:{attempt}")`` read as two
little-endian uint64 words, so a variation depends only on (base, stats, spec, seed).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .powergrid import Generator, ParameterVector, UCInstance, ValidationError

MIN_RATIO = 0.01
MAX_ATTEMPTS = 10


def stream(seed: int, label: str, attempt: int = 0) -> np.random.Generator:
    digest = hashlib.sha256(f"scuc-lab:{seed}:{label}:{attempt}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype="<u8").copy()
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ProfileStats:
    """Mean and standard deviation of each hour-to-hour system load ratio."""

    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != len(self.std):
            raise ValueError("mean and std must have equal length")
        if any(m <= 0 for m in self.mean) or any(s < 0 for s in self.std):
            raise ValueError("ratio means must be positive and deviations nonnegative")

    @property
    def horizon(self) -> int:
        return len(self.mean) + 1

    def to_json(self) -> str:
        return json.dumps({"mean": list(self.mean), "std": list(self.std)})

    @classmethod
    def from_json(cls, text: str) -> "ProfileStats":
        d = json.loads(text)
        return cls(d["mean"], d["std"])


def fit_profile_stats(hourly_loads) -> ProfileStats:
    """Fit ratio statistics from a days x hours grid of system loads."""
    loads = np.asarray(hourly_loads, dtype=float)
    if loads.ndim != 2 or loads.shape[0] < 2 or loads.shape[1] < 2:
        raise ValueError("need at least two days of at least two hours each")
    if np.any(loads <= 0) or not np.all(np.isfinite(loads)):
        raise ValueError("hourly loads must be finite and strictly positive")
    ratios = loads[:, 1:] / loads[:, :-1]
    return ProfileStats(ratios.mean(axis=0), ratios.std(axis=0, ddof=1))


def read_profile_csv(path: str | Path) -> np.ndarray:
    """Read a days x hours CSV grid whose header row holds hour indices."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    data = [[float(v) for v in row] for row in rows[1:] if row]
    if any(len(r) != width for r in data):
        raise ValueError(f"{path}: ragged rows")
    return np.array(data)


def write_profile_csv(loads: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(range(1, loads.shape[1] + 1))
        for row in loads:
            writer.writerow([f"{v:.6f}" for v in row])


@dataclass(frozen=True)
class Distribution:
    kind: str  # "uniform" (a=low, b=high), "normal" (a=mean, b=std) or "point" (a=value)
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal", "point"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "uniform" and self.b < self.a:
            raise ValueError("uniform needs low <= high")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal needs std >= 0")

    def draw(self, rng: np.random.Generator, size: int | None = None):
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size)
        return np.full(size, self.a) if size is not None else self.a

    @property
    def mean(self) -> float:
        return (self.a + self.b) / 2 if self.kind == "uniform" else self.a


@dataclass(frozen=True)
class ShiftSpec:
    """Distributions of the randomized quantities.

    ``peak`` is the peak system load as a fraction of total capacity; ``profile``
    is "normal" (ratios from ProfileStats) or "point" (ratios fixed at their means).
    """

    cost: Distribution = field(default_factory=lambda: Distribution("uniform", 0.95, 1.05))
    load: Distribution = field(default_factory=lambda: Distribution("uniform", 0.90, 1.10))
    peak: Distribution = field(default_factory=lambda: Distribution("uniform", 0.6 * 0.925, 0.6 * 1.075))
    profile: str = "normal"
    reserve_fraction: float = 0.0

    def __post_init__(self):
        if self.profile not in ("normal", "point"):
            raise ValueError("profile must be 'normal' or 'point'")
        if self.reserve_fraction < 0:
            raise ValueError("reserve fraction must be nonnegative")

    @classmethod
    def out_of_distribution(cls, reserve_fraction: float = 0.0) -> "ShiftSpec":
        return cls(
            cost=Distribution("normal", 1.05, 0.017),
            load=Distribution("normal", 1.0, 0.033),
            peak=Distribution("normal", 0.60 * 1.03, 0.009),
            reserve_fraction=reserve_fraction,
        )

    @classmethod
    def degenerate(cls, reserve_fraction: float = 0.0) -> "ShiftSpec":
        return cls(Distribution("point", 1.0), Distribution("point", 1.0), Distribution("point", 0.6), "point",
                   reserve_fraction)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ShiftSpec":
        d = json.loads(text)
        return cls(Distribution(**d["cost"]), Distribution(**d["load"]), Distribution(**d["peak"]),
                   d.get("profile", "normal"), d.get("reserve_fraction", 0.0))


def base_shares(base: UCInstance) -> np.ndarray:
    total = base.demand.sum()
    if total <= 0:
        return np.full(len(base.network.buses), 1.0 / len(base.network.buses))
    return base.demand.sum(axis=1) / total


def load_curve(ratios: Sequence[float], peak: float) -> np.ndarray:
    """Chain the hourly ratios from a unit first hour and scale the maximum to ``peak``."""
    curve = np.concatenate([[1.0], np.cumprod(np.asarray(ratios, dtype=float))])
    return curve * (peak / curve.max())


def materialize(base: UCInstance, params: ParameterVector, reserve_fraction: float = 0.0) -> UCInstance:
    """Build the variation instance that ``params`` describes."""
    G, B, T = len(base.generators), len(base.network.buses), base.horizon
    if (len(params.cost_multipliers), len(params.load_weights), len(params.hourly_ratios)) != (G, B, T - 1):
        raise ValidationError("parameter vector dimensions do not match the base system")
    generators = tuple(_scale_costs(g, a) for g, a in zip(base.generators, params.cost_multipliers))
    weighted = np.asarray(params.load_weights) * base_shares(base)
    shares = weighted / weighted.sum()
    system = load_curve(params.hourly_ratios, params.peak_fraction * base.capacity)
    return base.replace(generators=generators, demand=np.outer(shares, system), reserve=reserve_fraction * system)


def _scale_costs(g: Generator, alpha: float) -> Generator:
    return Generator(g.id, g.bus, g.min_power, g.max_power, tuple((s, alpha * c) for s, c in g.segments),
                     alpha * g.base_cost, alpha * g.startup_cost, g.ramp_up, g.ramp_down, g.min_up, g.min_down,
                     g.initial_status)


def draw_parameters(base: UCInstance, stats: ProfileStats, spec: ShiftSpec, seed: int,
                    attempt: int = 0) -> ParameterVector:
    G, B, T = len(base.generators), len(base.network.buses), base.horizon
    if stats.horizon != T:
        raise ValueError(f"profile statistics cover {stats.horizon} hours, instance has {T}")
    cost = spec.cost.draw(stream(seed, "cost", attempt), G)
    load = spec.load.draw(stream(seed, "load", attempt), B)
    if spec.profile == "normal":
        ratios = stream(seed, "profile", attempt).normal(np.asarray(stats.mean), np.asarray(stats.std))
    else:
        ratios = np.asarray(stats.mean)
    ratios = np.maximum(ratios, MIN_RATIO)
    peak = float(spec.peak.draw(stream(seed, "peak", attempt)))
    return ParameterVector(cost, load, ratios, peak)


def generate_variation(base: UCInstance, stats: ProfileStats, spec: ShiftSpec | None = None,
                       seed: int = 0) -> tuple[ParameterVector, UCInstance]:
    spec = spec or ShiftSpec()
    last_error = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            params = draw_parameters(base, stats, spec, seed, attempt)
            instance = materialize(base, params, spec.reserve_fraction)
            instance.validate()
            return params, instance
        except ValidationError as exc:
            last_error = exc
    raise ValidationError(f"seed {seed}: no valid variation after {MAX_ATTEMPTS} attempts ({last_error})")


def generate_ood_variation(base: UCInstance, stats: ProfileStats, seed: int = 0,
                           reserve_fraction: float = 0.0) -> tuple[ParameterVector, UCInstance]:
    return generate_variation(base, stats, ShiftSpec.out_of_distribution(reserve_fraction), seed)
