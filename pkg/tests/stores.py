"""Hand-constructed training stores (no solver involved)."""

from __future__ import annotations

import numpy as np

from scuc_lab.fixtures import load_fixture, reference_stats
from scuc_lab.learn import TrainingRecord, TrainingStore
from scuc_lab.powergrid import ParameterVector, UCSolution
from scuc_lab.sampling import ShiftSpec, draw_parameters


def solution_with(x: np.ndarray, n_segments: int = 3) -> UCSolution:
    x = np.asarray(x, dtype=float)
    G, T = x.shape
    zeros = np.zeros((G, T))
    return UCSolution(x, zeros, zeros, zeros, np.zeros((G, n_segments, T)), zeros, 0.0)


def constructed_store(commitments, enforced=None, params=None, base=None, seed0=0) -> TrainingStore:
    """Store over ``base`` (case6 by default) with the given commitments and enforced sets."""
    base = base if base is not None else load_fixture("case6")
    stats = reference_stats()
    store = TrainingStore(base)
    for i, x in enumerate(commitments):
        p = params[i] if params is not None else draw_parameters(base, stats, ShiftSpec(), seed0 + i)
        keys = frozenset(enforced[i]) if enforced is not None else frozenset()
        store.add(TrainingRecord(p, keys, solution_with(x, base.max_segments), seed0 + i))
    return store


def scalar_params(base, values) -> list[ParameterVector]:
    """Parameter vectors that differ only in the first cost multiplier."""
    G, B, T = len(base.generators), len(base.network.buses), base.horizon
    return [ParameterVector([v] + [1.0] * (G - 1), [1.0] * B, [1.0] * (T - 1), 0.6) for v in values]
