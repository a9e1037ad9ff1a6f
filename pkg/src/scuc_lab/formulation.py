"""Mixed-integer model of security-constrained unit commitment.

The model is a plain sparse representation (objective vector, bounds,
integrality, two-sided rows) that any backend can consume. Flow rows exist only
for explicitly enforced constraint keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .powergrid import ConstraintKey, UCInstance, UCSolution, sorted_keys
from .sensitivity import sensitivity_for


class HyperplaneKind(str, Enum):
    FIX_ZERO = "FixZero"
    FIX_ONE = "FixOne"
    FIX_NEXT = "FixNext"


# conflict resolution order when several hyperplanes target the same (g, t)
HYPERPLANE_PRIORITY = (HyperplaneKind.FIX_ZERO, HyperplaneKind.FIX_ONE, HyperplaneKind.FIX_NEXT)


@dataclass(frozen=True, order=True)
class Hyperplane:
    kind: HyperplaneKind
    generator: str
    period: int

    def to_list(self) -> list:
        return [self.kind.value, self.generator, self.period]

    @classmethod
    def from_list(cls, v) -> "Hyperplane":
        return cls(HyperplaneKind(v[0]), str(v[1]), int(v[2]))

    def satisfied_by(self, commitment_row: np.ndarray) -> bool:
        v = round(float(commitment_row[self.period]))
        if self.kind is HyperplaneKind.FIX_ZERO:
            return v == 0
        if self.kind is HyperplaneKind.FIX_ONE:
            return v == 1
        return v == round(float(commitment_row[self.period + 1]))


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class VarIndex:
    """Column positions of every SCUC variable; segment slots absent for a generator are -1."""

    x: np.ndarray  # (G, T)
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    r: np.ndarray
    yk: np.ndarray  # (G, K_max, T)
    n: int

    @classmethod
    def build(cls, instance: UCInstance) -> "VarIndex":
        G, T, K = len(instance.generators), instance.horizon, instance.max_segments
        x, z, w, y, r = (np.empty((G, T), dtype=int) for _ in range(5))
        yk = np.full((G, K, T), -1, dtype=int)
        n = 0
        for gi, g in enumerate(instance.generators):
            for arr in (x, z, w, y, r):
                arr[gi] = np.arange(n, n + T)
                n += T
            for k in range(len(g.segments)):
                yk[gi, k] = np.arange(n, n + T)
                n += T
        return cls(x, z, w, y, r, yk, n)

    def binaries(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.z.ravel(), self.w.ravel()])


@dataclass(frozen=True, eq=False)
class MipModel:
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray  # 1 for binary columns
    rows: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    row_tags: tuple  # (family, detail) per row; detail is a ConstraintKey for flow rows
    var_names: tuple[str, ...]
    index: VarIndex

    @property
    def n_vars(self) -> int:
        return len(self.cost)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def flow_keys(self) -> list[ConstraintKey]:
        return [d for f, d in self.row_tags if f == "flow"]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "MipModel":
        return MipModel(self.cost, lower, upper, self.integrality, self.rows, self.row_lower, self.row_upper,
                        self.row_tags, self.var_names, self.index)


class _RowBuilder:
    def __init__(self):
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.tags: list[tuple] = []

    def add(self, cols: Sequence[int], vals: Sequence[float], lo: float, hi: float, tag: tuple) -> None:
        i = len(self.lo)
        for c, v in zip(cols, vals):
            if v != 0.0:
                self.r.append(i)
                self.c.append(int(c))
                self.v.append(float(v))
        self.lo.append(lo)
        self.hi.append(hi)
        self.tags.append(tag)

    def matrix(self, n: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.v, (self.r, self.c)), shape=(len(self.lo), n))


def check_hyperplanes(instance: UCInstance, hyperplanes: Iterable[Hyperplane]) -> list[Hyperplane]:
    gens = instance.generator_index()
    seen: dict[tuple[str, int], Hyperplane] = {}
    for hp in hyperplanes:
        if hp.generator not in gens:
            raise ModelError(f"hyperplane {hp} targets unknown generator")
        if not 0 <= hp.period < instance.horizon:
            raise ModelError(f"hyperplane {hp} has period out of range")
        if hp.kind is HyperplaneKind.FIX_NEXT and hp.period >= instance.horizon - 1:
            raise ModelError(f"hyperplane {hp} needs a following period")
        slot = (hp.generator, hp.period)
        if slot in seen and seen[slot] != hp:
            raise ModelError(f"conflicting hyperplanes {seen[slot]} and {hp}")
        seen[slot] = hp
    return sorted(seen.values(), key=lambda h: (gens[h.generator], h.period, HYPERPLANE_PRIORITY.index(h.kind)))


def build_model(
    instance: UCInstance,
    enforced: Iterable[ConstraintKey] = (),
    hyperplanes: Iterable[Hyperplane] = (),
) -> MipModel:
    """Assemble the full commitment model with the given flow rows and hyperplanes."""
    G, T = len(instance.generators), instance.horizon
    idx = VarIndex.build(instance)
    n = idx.n
    cost = np.zeros(n)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    integrality = np.zeros(n, dtype=np.uint8)
    names: list[str] = [""] * n

    for gi, g in enumerate(instance.generators):
        for t in range(T):
            for arr, tag in ((idx.x, "x"), (idx.z, "z"), (idx.w, "w")):
                integrality[arr[gi, t]] = 1
                upper[arr[gi, t]] = 1.0
                names[arr[gi, t]] = f"{tag}[{g.id},{t}]"
            names[idx.y[gi, t]] = f"y[{g.id},{t}]"
            names[idx.r[gi, t]] = f"r[{g.id},{t}]"
            upper[idx.y[gi, t]] = g.max_power
            upper[idx.r[gi, t]] = g.max_power - g.min_power
            cost[idx.x[gi, t]] = g.base_cost
            cost[idx.z[gi, t]] = g.startup_cost
            for k, (size, c) in enumerate(g.segments):
                j = idx.yk[gi, k, t]
                names[j] = f"yk[{g.id},{k},{t}]"
                upper[j] = size
                cost[j] = c

    rb = _RowBuilder()
    load = instance.system_load
    for t in range(T):
        rb.add(idx.y[:, t], np.ones(G), load[t], load[t], ("balance", t))
    for t in range(T):
        rb.add(idx.r[:, t], np.ones(G), instance.reserve[t], np.inf, ("reserve", t))

    for gi, g in enumerate(instance.generators):
        span = g.max_power - g.min_power
        segs = [idx.yk[gi, k] for k in range(len(g.segments))]
        for t in range(T):
            head = [s[t] for s in segs] + [idx.r[gi, t]]
            ones = [1.0] * len(head)
            if t < T - 1:
                if g.min_up > 1:
                    rb.add(head + [idx.x[gi, t], idx.z[gi, t], idx.w[gi, t + 1]],
                           ones + [-span, g.max_power - g.ramp_up, g.max_power - g.ramp_down],
                           -np.inf, 0.0, ("capacity", (g.id, t)))
                else:
                    rb.add(head + [idx.x[gi, t], idx.z[gi, t], idx.w[gi, t + 1]],
                           ones + [-span, g.max_power - g.ramp_up, max(g.ramp_up - g.ramp_down, 0.0)],
                           -np.inf, 0.0, ("capacity", (g.id, t)))
                    rb.add(head + [idx.x[gi, t], idx.w[gi, t + 1], idx.z[gi, t]],
                           ones + [-span, g.max_power - g.ramp_down, max(g.ramp_down - g.ramp_up, 0.0)],
                           -np.inf, 0.0, ("capacity", (g.id, t)))
            else:
                rb.add(head + [idx.x[gi, t], idx.z[gi, t]], ones + [-span, g.max_power - g.ramp_up],
                       -np.inf, 0.0, ("capacity", (g.id, t)))
        for t in range(1, T):
            rb.add([idx.y[gi, t], idx.y[gi, t - 1]], [1.0, -1.0], -np.inf, g.ramp_up, ("ramp_up", (g.id, t)))
            rb.add([idx.y[gi, t], idx.y[gi, t - 1]], [1.0, -1.0], -g.ramp_down, np.inf, ("ramp_down", (g.id, t)))
        for t in range(T):
            window = list(idx.z[gi, max(0, t - g.min_up + 1):t + 1])
            rb.add(window + [idx.x[gi, t]], [1.0] * len(window) + [-1.0], -np.inf, 0.0, ("min_up", (g.id, t)))
        for t in range(T):
            window = list(idx.z[gi, max(0, t - g.min_down + 1):t + 1])
            lag = t - g.min_down
            if lag >= 0:
                rb.add(window + [idx.x[gi, lag]], [1.0] * (len(window) + 1), -np.inf, 1.0, ("min_down", (g.id, t)))
            else:
                # lagged status precedes the horizon: use the initial status
                rb.add(window, [1.0] * len(window), -np.inf, 1.0 - g.initial_status, ("min_down", (g.id, t)))

    sens = sensitivity_for(instance.network)
    gen_bus = [sens.bus_pos[g.bus] for g in instance.generators]
    for key in sorted_keys(set(enforced)):
        if not 0 <= key.period < T:
            raise ModelError(f"enforced key {key} has period out of range")
        row = sens.row(key)  # raises IslandingError for bridge outages
        line = instance.network.lines[sens.line_pos[key.line]]
        limit = line.limit(key.outage)
        offset = float(row @ instance.demand[:, key.period])
        coefs = [row[b] for b in gen_bus]
        rb.add(idx.y[:, key.period], coefs, offset - limit, offset + limit, ("flow", key))

    for gi, g in enumerate(instance.generators):
        for t in range(T):
            segs = [idx.yk[gi, k, t] for k in range(len(g.segments))]
            rb.add([idx.y[gi, t], idx.x[gi, t]] + segs, [1.0, -g.min_power] + [-1.0] * len(segs), 0.0, 0.0,
                   ("link_production", (g.id, t)))
        for t in range(T):
            if t == 0:
                rb.add([idx.x[gi, 0], idx.z[gi, 0], idx.w[gi, 0]], [1.0, -1.0, 1.0],
                       g.initial_status, g.initial_status, ("link_status", (g.id, 0)))
            else:
                rb.add([idx.x[gi, t], idx.x[gi, t - 1], idx.z[gi, t], idx.w[gi, t]], [1.0, -1.0, -1.0, 1.0],
                       0.0, 0.0, ("link_status", (g.id, t)))

    gens = instance.generator_index()
    for hp in check_hyperplanes(instance, hyperplanes):
        gi = gens[hp.generator]
        if hp.kind is HyperplaneKind.FIX_ZERO:
            rb.add([idx.x[gi, hp.period]], [1.0], 0.0, 0.0, ("hyperplane", hp))
        elif hp.kind is HyperplaneKind.FIX_ONE:
            rb.add([idx.x[gi, hp.period]], [1.0], 1.0, 1.0, ("hyperplane", hp))
        else:
            rb.add([idx.x[gi, hp.period], idx.x[gi, hp.period + 1]], [1.0, -1.0], 0.0, 0.0, ("hyperplane", hp))

    return MipModel(cost, lower, upper, integrality, rb.matrix(n), np.array(rb.lo), np.array(rb.hi),
                    tuple(rb.tags), tuple(names), idx)


def objective_value(instance: UCInstance, sol: UCSolution) -> float:
    total = 0.0
    for gi, g in enumerate(instance.generators):
        total += g.startup_cost * float(sol.startup[gi].sum()) + g.base_cost * float(sol.commitment[gi].sum())
        for k, (_, c) in enumerate(g.segments):
            total += c * float(sol.segment_production[gi, k].sum())
    return total


def extract_solution(instance: UCInstance, model: MipModel, assignment: np.ndarray) -> UCSolution:
    """Map a backend assignment onto a solution, rounding binaries and clearing round-off."""
    idx = model.index
    a = np.asarray(assignment, dtype=float)
    x = np.clip(np.round(a[idx.x]), 0, 1)
    z = np.clip(np.round(a[idx.z]), 0, 1)
    w = np.clip(np.round(a[idx.w]), 0, 1)
    G, K, T = idx.yk.shape
    yk = np.zeros((G, K, T))
    for gi, g in enumerate(instance.generators):
        for k, (size, _) in enumerate(g.segments):
            yk[gi, k] = np.clip(a[idx.yk[gi, k]], 0.0, size) * x[gi]
    pmin = np.array([g.min_power for g in instance.generators])
    y = pmin[:, None] * x + yk.sum(axis=1)
    r = np.maximum(a[idx.r], 0.0)
    sol = UCSolution(x, z, w, y, yk, r, 0.0)
    return UCSolution(x, z, w, y, yk, r, objective_value(instance, sol))


def write_lp(model: MipModel, path: str | Path) -> None:
    """Export in CPLEX LP text format: objective, constraints, bounds, binaries."""

    def expr(cols, vals) -> str:
        parts = []
        for c, v in zip(cols, vals):
            parts.append(f"{'-' if v < 0 else '+'} {abs(v):.12g} {_lp_name(model.var_names[c])}")
        text = " ".join(parts) or "0 dummy"
        return text[2:] if text.startswith("+ ") else text

    lines = ["\\ scuc-lab model", "Minimize", " obj: " + expr(np.nonzero(model.cost)[0], model.cost[model.cost != 0]),
             "Subject To"]
    A = model.rows
    for i in range(model.n_rows):
        start, end = A.indptr[i], A.indptr[i + 1]
        body = expr(A.indices[start:end], A.data[start:end])
        lo, hi = model.row_lower[i], model.row_upper[i]
        if lo == hi:
            lines.append(f" c{i}: {body} = {lo:.12g}")
            continue
        if np.isfinite(lo):
            lines.append(f" c{i}_lo: {body} >= {lo:.12g}")
        if np.isfinite(hi):
            lines.append(f" c{i}_hi: {body} <= {hi:.12g}")
    lines.append("Bounds")
    for j in range(model.n_vars):
        hi = "+inf" if not np.isfinite(model.upper[j]) else f"{model.upper[j]:.12g}"
        lines.append(f" {model.lower[j]:.12g} <= {_lp_name(model.var_names[j])} <= {hi}")
    lines.append("Binaries")
    lines.extend(f" {_lp_name(model.var_names[j])}" for j in np.nonzero(model.integrality)[0])
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


def _lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace(",", "_")
