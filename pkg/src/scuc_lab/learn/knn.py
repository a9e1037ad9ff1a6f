"""Nearest-neighbor predictors for transmission constraints and warm starts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..powergrid import ConstraintKey, ParameterVector
from ..solve import WarmStart
from .store import TrainingStore, stack_commitments


@dataclass(frozen=True)
class TransmissionPredictorConfig:
    k: int = 300
    p_threshold: float = 10.0  # percent of neighbors that must need a constraint

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 <= self.p_threshold <= 100:
            raise ValueError("p_threshold must lie in [0, 100]")


@dataclass(frozen=True)
class WarmStartPredictorConfig:
    k: int = 50
    p: float = 0.9
    mode: str = "consensus"  # or "collect"
    n: int = 5  # starts handed over in collect mode

    def __post_init__(self):
        if self.mode not in ("consensus", "collect"):
            raise ValueError("mode must be 'consensus' or 'collect'")
        if not 0.5 <= self.p <= 1.0:
            raise ValueError("p must lie in [0.5, 1.0]")
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be at least 1")


def _normalize(matrix: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = matrix.min(axis=0), matrix.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return (matrix - lo) / span, (query - lo) / span


def knn_indices(store: TrainingStore, query: ParameterVector | np.ndarray, k: int) -> list[int]:
    """Store positions of the ``k`` nearest records, closest first, ties by position.

    Distances are Euclidean after min-max scaling each coordinate over the store.
    """
    if len(store) == 0:
        raise ValueError("training store is empty")
    if not 1 <= k <= len(store):
        raise ValueError(f"k must lie in [1, {len(store)}], got {k}")
    q = query.as_array() if isinstance(query, ParameterVector) else np.asarray(query, dtype=float)
    data, q = _normalize(store.params_matrix(), q)
    if q.shape != data.shape[1:]:
        raise ValueError("query dimension does not match the store")
    dist = np.sqrt(((data - q) ** 2).sum(axis=1))
    return [int(i) for i in np.argsort(dist, kind="stable")[:k]]


def predict_transmission(store: TrainingStore, query, cfg: TransmissionPredictorConfig) -> frozenset[ConstraintKey]:
    """Constraints needed by at least ``p_threshold`` percent of the k nearest records."""
    k = min(cfg.k, len(store))
    counts: Counter[ConstraintKey] = Counter()
    for i in knn_indices(store, query, k):
        counts.update(store.records[i].enforced)
    # count/k >= p/100, kept in integers where possible
    return frozenset(key for key, c in counts.items() if 100.0 * c >= cfg.p_threshold * k)


def consensus_matrix(store: TrainingStore, query, cfg: WarmStartPredictorConfig) -> np.ndarray:
    """Per-variable consensus: 1, 0, or -1 where the neighbors disagree."""
    idx = knn_indices(store, query, min(cfg.k, len(store)))
    share = stack_commitments([store.records[i] for i in idx]).mean(axis=0)
    out = np.full(share.shape, -1, dtype=np.int8)
    out[share > cfg.p] = 1
    out[share <= 1.0 - cfg.p] = 0
    return out


def predict_warm_start(store: TrainingStore, query, cfg: WarmStartPredictorConfig) -> list[WarmStart]:
    gids = [g.id for g in store.base.generators]
    if cfg.mode == "collect":
        if cfg.n > len(store):
            raise ValueError(f"collect({cfg.n}) needs at least {cfg.n} records")
        starts = []
        for i in knn_indices(store, query, cfg.n):
            x = stack_commitments([store.records[i]])[0]
            starts.append(WarmStart({(g, t): int(x[gi, t]) for gi, g in enumerate(gids) for t in range(x.shape[1])}))
        return starts
    x = consensus_matrix(store, query, cfg)
    return [WarmStart({(gids[gi], int(t)): int(x[gi, t]) for gi, t in zip(*np.nonzero(x >= 0))})]
