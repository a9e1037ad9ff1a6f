"""DC power-flow sensitivities and the violation scan of the screening loop.

Flows are oriented from ``from_bus`` to ``to_bus``; an injection at bus ``b`` is
withdrawn at the slack bus. Post-outage shift factors are derived from the base
ones through line-outage distribution factors (LODF):

    delta_c[l, b] = delta_0[l, b] + LODF[l, c] * delta_0[c, b]
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .powergrid import ConstraintKey, PowerNetwork, UCInstance, UCSolution

log = logging.getLogger(__name__)

BRIDGE_TOL = 1e-9


class SingularNetworkError(ValueError):
    pass


class IslandingError(ValueError):
    """Removing the outaged line splits the network; the scenario is excluded."""


@dataclass(frozen=True, eq=False)
class IsfMatrix:
    matrix: np.ndarray  # (n_lines, n_buses)
    lines: tuple[str, ...]
    buses: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class OutageIsf:
    outage: str
    monitored: tuple[str, ...]  # every line except the outaged one
    matrix: np.ndarray  # (len(monitored), n_buses)


@dataclass(frozen=True)
class ViolationSet:
    entries: tuple[tuple[ConstraintKey, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def keys(self) -> list[ConstraintKey]:
        return [k for k, _ in self.entries]


def incidence(network: PowerNetwork) -> np.ndarray:
    idx = network.bus_index
    A = np.zeros((len(network.lines), len(network.buses)))
    for i, line in enumerate(network.lines):
        A[i, idx[line.from_bus]] = 1.0
        A[i, idx[line.to_bus]] = -1.0
    return A


def build_isf(network: PowerNetwork) -> IsfMatrix:
    """Injection shift factors from the reduced nodal susceptance matrix."""
    A = incidence(network)
    b = np.array([1.0 / l.reactance for l in network.lines])
    Bbus = A.T @ (b[:, None] * A)
    slack = network.bus_index[network.slack_bus]
    keep = [i for i in range(len(network.buses)) if i != slack]
    try:
        Xred = np.linalg.solve(Bbus[np.ix_(keep, keep)], np.eye(len(keep)))
    except np.linalg.LinAlgError as exc:
        raise SingularNetworkError("susceptance matrix is singular") from exc
    X = np.zeros((len(network.buses), len(network.buses)))
    X[np.ix_(keep, keep)] = Xred
    isf = b[:, None] * (A @ X)
    isf[:, slack] = 0.0
    return IsfMatrix(isf, tuple(l.id for l in network.lines), tuple(network.buses))


def build_lodf(network: PowerNetwork, isf: IsfMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(lodf, is_bridge)``; columns of bridge outages are NaN."""
    A = incidence(network)
    # ptdf[l, c]: flow on l per MW transferred from the from-bus to the to-bus of c
    ptdf = isf.matrix @ A.T
    denom = 1.0 - np.diag(ptdf)
    is_bridge = np.abs(denom) < BRIDGE_TOL
    safe = np.where(is_bridge, 1.0, denom)
    lodf = ptdf / safe[None, :]
    lodf[:, is_bridge] = np.nan
    np.fill_diagonal(lodf, -1.0)
    return lodf, is_bridge


def build_outage_isf(network: PowerNetwork, isf: IsfMatrix, outage: str) -> OutageIsf:
    lodf, is_bridge = build_lodf(network, isf)
    c = network.line_index[outage]
    if is_bridge[c]:
        raise IslandingError(f"outage of line {outage!r} islands the network")
    rows = [i for i in range(len(network.lines)) if i != c]
    mat = isf.matrix[rows] + lodf[rows, c][:, None] * isf.matrix[c][None, :]
    return OutageIsf(outage, tuple(network.lines[i].id for i in rows), mat)


class NetworkSensitivity:
    """Cached sensitivities for one network; safe to share between threads.

    Scenario index 0 is the base case, index ``c + 1`` the outage of line ``c``.
    """

    def __init__(self, network: PowerNetwork):
        self.network = network
        self.isf = build_isf(network)
        self.lodf, self.is_bridge = build_lodf(network, self.isf)
        self.line_ids = tuple(l.id for l in network.lines)
        self.line_pos = {lid: i for i, lid in enumerate(self.line_ids)}
        self.bus_pos = network.bus_index
        self.contingencies = tuple(lid for lid, br in zip(self.line_ids, self.is_bridge) if not br)
        excluded = [lid for lid, br in zip(self.line_ids, self.is_bridge) if br]
        if excluded:
            log.info("excluding islanding outages %s from the contingency list", excluded)
        self._rows: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def n_lines(self) -> int:
        return len(self.line_ids)

    def scenario_pos(self, outage: str | None) -> int:
        return 0 if outage is None else self.line_pos[outage] + 1

    def key(self, l: int, s: int, t: int) -> ConstraintKey:
        return ConstraintKey(self.line_ids[l], None if s == 0 else self.line_ids[s - 1], int(t))

    def monitored_mask(self) -> np.ndarray:
        L = self.n_lines
        mask = np.ones((L, L + 1), dtype=bool)
        mask[:, 1:] = ~np.eye(L, dtype=bool)
        mask[:, 1:][:, self.is_bridge] = False
        return mask

    def limit_matrix(self) -> np.ndarray:
        L = self.n_lines
        lim = np.empty((L, L + 1))
        for i, line in enumerate(self.network.lines):
            lim[i, 0] = line.normal_limit
            for c, cid in enumerate(self.line_ids):
                lim[i, c + 1] = line.limit(cid)
        return lim

    def outage_row(self, line: str, outage: str) -> np.ndarray:
        """Post-outage shift factors of ``line`` when ``outage`` is out (memoized)."""
        c = self.line_pos[outage]
        if self.is_bridge[c]:
            raise IslandingError(f"outage of line {outage!r} islands the network")
        if line == outage:
            raise ValueError("the outaged line is not monitored in its own scenario")
        tag = f"{line}\x00{outage}"
        with self._lock:
            row = self._rows.get(tag)
            if row is None:
                l = self.line_pos[line]
                row = self.isf.matrix[l] + self.lodf[l, c] * self.isf.matrix[c]
                row.setflags(write=False)
                self._rows[tag] = row
        return row

    def row(self, key: ConstraintKey) -> np.ndarray:
        if key.outage is None:
            return self.isf.matrix[self.line_pos[key.line]]
        return self.outage_row(key.line, key.outage)

    def injections(self, instance: UCInstance, production: np.ndarray) -> np.ndarray:
        inj = -np.asarray(instance.demand, dtype=float).copy()
        for gi, g in enumerate(instance.generators):
            inj[self.bus_pos[g.bus]] += production[gi]
        return inj

    def all_flows(self, instance: UCInstance, production: np.ndarray) -> np.ndarray:
        """Flows for every (line, scenario, period); unmonitored entries are zero."""
        f0 = self.isf.matrix @ self.injections(instance, production)  # (L, T)
        lodf = np.nan_to_num(self.lodf)
        flows = np.empty((self.n_lines, self.n_lines + 1, f0.shape[1]))
        flows[:, 0, :] = f0
        flows[:, 1:, :] = f0[:, None, :] + lodf[:, :, None] * f0[None, :, :]
        flows[:, 1:, :][~self.monitored_mask()[:, 1:]] = 0.0
        return flows

    def all_keys(self, horizon: int) -> list[ConstraintKey]:
        mask = self.monitored_mask()
        return [self.key(l, s, t) for t in range(horizon) for l, s in zip(*np.nonzero(mask))]


_CACHE: dict[str, NetworkSensitivity] = {}
_CACHE_LOCK = threading.Lock()


def _network_tag(network: PowerNetwork) -> str:
    payload = [list(network.buses), network.slack_bus,
               [[l.id, l.from_bus, l.to_bus, l.reactance, l.normal_limit, l.contingency_limit,
                 sorted(l.contingency_overrides.items())] for l in network.lines]]
    return hashlib.sha256(json.dumps(payload).encode()).hexdigest()


def sensitivity_for(network: PowerNetwork) -> NetworkSensitivity:
    tag = _network_tag(network)
    with _CACHE_LOCK:
        sens = _CACHE.get(tag)
        if sens is None:
            sens = _CACHE[tag] = NetworkSensitivity(network)
    return sens


def scan_violations(
    instance: UCInstance,
    sol: UCSolution,
    enforced: Iterable[ConstraintKey] = (),
    max_violations_per_period: int = 15,
    threshold: float = 1e-6,
) -> ViolationSet:
    """Find violated flow constraints and keep the ones the screening loop adds.

    Overloads at or below ``threshold`` MW count as zero. Among the rest, only the
    worst scenario per (line, period) is kept, then the ``max_violations_per_period``
    largest per period. Ties go to the lexicographically smaller (line, scenario).
    """
    sens = sensitivity_for(instance.network)
    flows = sens.all_flows(instance, sol.production)
    limits = sens.limit_matrix()
    gamma = np.maximum(np.abs(flows) - limits[:, :, None], 0.0)
    gamma[~sens.monitored_mask()] = 0.0
    for key in enforced:
        gamma[sens.line_pos[key.line], sens.scenario_pos(key.outage), key.period] = 0.0
    gamma[gamma <= threshold] = 0.0

    best = gamma.max(axis=1)  # (L, T)
    per_period: dict[int, list[tuple[float, str, str, ConstraintKey]]] = {}
    for l, t in zip(*np.nonzero(best > 0)):
        hits = np.nonzero(gamma[l, :, t] == best[l, t])[0]
        keys = [sens.key(l, s, t) for s in hits]
        key = min(keys, key=lambda k: k.outage or "")
        per_period.setdefault(int(t), []).append((-float(best[l, t]), key.line, key.outage or "", key))

    entries = []
    for t in sorted(per_period):
        for neg, _, _, key in sorted(per_period[t])[:max_violations_per_period]:
            entries.append((key, -neg))
    return ViolationSet(tuple(entries))
