"""Affine-subspace predictor: per-hyperplane gates over historical commitments.

For every candidate hyperplane (x=0, x=1, x_t=x_{t+1} at each generator and
period) the training labels record whether each optimum satisfied it. A gate
then decides, from the label mean z and cross-validated SVM quality, whether
the hyperplane is always added, never added, or left to a classifier.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..formulation import HYPERPLANE_PRIORITY, Hyperplane, HyperplaneKind
from ..powergrid import ParameterVector, UCInstance
from .store import StoreMismatchError, TrainingStore, stack_commitments
from .svm import SvmModel, kfold_evaluate, svm_train

ADD, SKIP, SVM = "add", "skip", "svm"


@dataclass(frozen=True)
class GateThresholds:
    z_fix: float
    z_min: float
    z_max: float
    alpha_r: float
    alpha_p: float

    def __post_init__(self):
        if not 0 <= self.z_min <= self.z_max <= 1:
            raise ValueError("need 0 <= z_min <= z_max <= 1")
        if self.z_fix < self.z_max:
            raise ValueError("need z_fix >= z_max")
        if not (0 <= self.alpha_r <= 1 and 0 <= self.alpha_p <= 1):
            raise ValueError("alpha_r and alpha_p must lie in [0, 1]")

    def precision_target(self, z_bar: float) -> float:
        return max(z_bar, 1.0 - z_bar) * (1.0 - self.alpha_p) + self.alpha_p


DEFAULT_THRESHOLDS = {
    HyperplaneKind.FIX_ZERO: GateThresholds(1.000, 0.250, 0.750, 0.90, 0.90),
    HyperplaneKind.FIX_ONE: GateThresholds(1.000, 0.250, 0.750, 0.75, 0.75),
    HyperplaneKind.FIX_NEXT: GateThresholds(0.975, 0.025, 0.975, 0.50, 0.75),
}


@dataclass(frozen=True)
class AffineGateConfig:
    thresholds: Mapping[HyperplaneKind, GateThresholds] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    C: float = 1.0
    k_cv: int = 5
    cross_validate: bool = True  # False trusts every trained classifier blindly

    def __post_init__(self):
        if set(self.thresholds) != set(HyperplaneKind):
            raise ValueError("thresholds must cover every hyperplane kind")
        if self.k_cv < 2:
            raise ValueError("k_cv must be at least 2")

    @classmethod
    def variant(cls, name: str) -> "AffineGateConfig":
        """Named settings: svm (defaults), A (relaxed class balance), B (A plus low
        precision/recall thresholds), C (defaults without cross-validation)."""
        if name == "svm":
            return cls()
        if name == "C":
            return cls(cross_validate=False)
        if name in ("A", "B"):
            alpha = 0.5 if name == "B" else None
            return cls({kind: GateThresholds(0.975, 0.025, 0.975, alpha if alpha is not None else t.alpha_r,
                                             alpha if alpha is not None else t.alpha_p)
                        for kind, t in DEFAULT_THRESHOLDS.items()})
        raise ValueError(f"unknown affine predictor variant {name!r}")

    def to_dict(self) -> dict:
        return {"thresholds": {k.value: asdict(t) for k, t in self.thresholds.items()}, "C": self.C,
                "k_cv": self.k_cv, "cross_validate": self.cross_validate}

    @classmethod
    def from_dict(cls, d) -> "AffineGateConfig":
        return cls({HyperplaneKind(k): GateThresholds(**v) for k, v in d["thresholds"].items()}, d["C"], d["k_cv"],
                   d["cross_validate"])


def extract_features(instance: UCInstance, params: ParameterVector | None, generator: str) -> np.ndarray:
    """Peak load, hourly loads, mean segment cost of ``generator`` and the mean of the others.

    ``params`` is accepted for symmetry with the other predictors; every feature
    is read off the materialized instance.
    """
    index = instance.generator_index()
    if generator not in index:
        raise KeyError(f"unknown generator {generator!r}")
    load = instance.system_load
    own = instance.generators[index[generator]].mean_marginal_cost
    others = [g.mean_marginal_cost for g in instance.generators if g.id != generator]
    rest = float(np.mean(others)) if others else 0.0
    return np.concatenate([[load.max()], load, [own, rest]])


@dataclass(frozen=True, eq=False)
class Gate:
    decision: str  # ADD, SKIP or SVM
    z_bar: float
    cv_precision: float | None = None
    cv_recall: float | None = None
    cv_dropped: int = 0
    model: SvmModel | None = None

    def to_dict(self) -> dict:
        return {"decision": self.decision, "z_bar": self.z_bar, "cv_precision": self.cv_precision,
                "cv_recall": self.cv_recall, "cv_dropped": self.cv_dropped,
                "model": self.model.to_dict() if self.model is not None else None}

    @classmethod
    def from_dict(cls, d) -> "Gate":
        model = SvmModel.from_dict(d["model"]) if d.get("model") else None
        return cls(d["decision"], d["z_bar"], d.get("cv_precision"), d.get("cv_recall"), d.get("cv_dropped", 0),
                   model)


def gate_decision(z_bar: float, thresholds: GateThresholds) -> str | None:
    """ADD or SKIP from the label mean alone, or None when a classifier must decide."""
    if z_bar >= thresholds.z_fix:
        return ADD
    if not thresholds.z_min <= z_bar <= thresholds.z_max:
        return SKIP
    return None


def cv_accepts(z_bar: float, precision: float, recall: float, thresholds: GateThresholds) -> bool:
    return recall >= thresholds.alpha_r and precision >= thresholds.precision_target(z_bar)


@dataclass(frozen=True, eq=False)
class AffinePredictor:
    fingerprint: str
    config: AffineGateConfig
    generators: tuple[str, ...]
    horizon: int
    gates: Mapping[Hyperplane, Gate]

    def counts(self) -> dict[str, int]:
        out = {ADD: 0, SKIP: 0, SVM: 0}
        for gate in self.gates.values():
            out[gate.decision] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "config": self.config.to_dict(),
            "generators": list(self.generators),
            "horizon": self.horizon,
            "gates": [[*hp.to_list(), gate.to_dict()] for hp, gate in sorted(self.gates.items())],
        }

    @classmethod
    def from_dict(cls, d) -> "AffinePredictor":
        gates = {Hyperplane.from_list(item[:3]): Gate.from_dict(item[3]) for item in d["gates"]}
        return cls(d["fingerprint"], AffineGateConfig.from_dict(d["config"]), tuple(d["generators"]), d["horizon"],
                   gates)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "AffinePredictor":
        return cls.from_dict(json.loads(Path(path).read_text()))


def hyperplane_labels(store: TrainingStore) -> dict[Hyperplane, np.ndarray]:
    """Label vector z (1 where the training optimum satisfies it) per candidate hyperplane."""
    x = stack_commitments(store.records)  # (s, G, T)
    T = x.shape[2]
    out = {}
    for gi, g in enumerate(store.base.generators):
        for t in range(T):
            out[Hyperplane(HyperplaneKind.FIX_ZERO, g.id, t)] = (x[:, gi, t] == 0).astype(np.int8)
            out[Hyperplane(HyperplaneKind.FIX_ONE, g.id, t)] = (x[:, gi, t] == 1).astype(np.int8)
            if t + 1 < T:
                out[Hyperplane(HyperplaneKind.FIX_NEXT, g.id, t)] = (x[:, gi, t] == x[:, gi, t + 1]).astype(np.int8)
    return out


def fit_affine_predictor(store: TrainingStore, cfg: AffineGateConfig = AffineGateConfig()) -> AffinePredictor:
    s = len(store)
    if cfg.cross_validate and s < cfg.k_cv:
        raise ValueError(f"need at least k_cv={cfg.k_cv} records, store has {s}")
    if s == 0:
        raise ValueError("training store is empty")
    instances = [store.instance(i) for i in range(s)]
    features: dict[str, np.ndarray] = {}
    gates: dict[Hyperplane, Gate] = {}
    for hp, z in hyperplane_labels(store).items():
        thresholds = cfg.thresholds[hp.kind]
        z_bar = float(z.mean())
        decision = gate_decision(z_bar, thresholds)
        if decision is not None:
            gates[hp] = Gate(decision, z_bar)
            continue
        if hp.generator not in features:
            features[hp.generator] = np.vstack(
                [extract_features(inst, rec.params, hp.generator) for inst, rec in zip(instances, store.records)])
        X = features[hp.generator]
        h = np.where(z == 1, 1, -1)
        if not cfg.cross_validate:
            gates[hp] = Gate(SVM, z_bar, model=svm_train(X, h, cfg.C))
            continue
        precision, recall = kfold_evaluate(X, h, cfg.k_cv, cfg.C)
        dropped = s % cfg.k_cv
        if cv_accepts(z_bar, precision, recall, thresholds):
            gates[hp] = Gate(SVM, z_bar, precision, recall, dropped, svm_train(X, h, cfg.C))
        else:
            gates[hp] = Gate(SKIP, z_bar, precision, recall, dropped)
    return AffinePredictor(store.fingerprint, cfg, tuple(g.id for g in store.base.generators), store.base.horizon,
                           gates)


def resolve_conflicts(candidates) -> list[Hyperplane]:
    """Keep at most one hyperplane per (generator, period), by kind priority."""
    rank = {kind: i for i, kind in enumerate(HYPERPLANE_PRIORITY)}
    chosen: dict[tuple[str, int], Hyperplane] = {}
    for hp in candidates:
        slot = (hp.generator, hp.period)
        if slot not in chosen or rank[hp.kind] < rank[chosen[slot].kind]:
            chosen[slot] = hp
    return sorted(chosen.values(), key=lambda h: (h.generator, h.period))


def predict_affine(predictor: AffinePredictor, instance: UCInstance, query: ParameterVector | None = None
                   ) -> list[Hyperplane]:
    if instance.fingerprint() != predictor.fingerprint:
        raise StoreMismatchError(
            f"predictor fitted for {predictor.fingerprint}, instance is {instance.fingerprint()}")
    features: dict[str, np.ndarray] = {}
    emitted = []
    for hp, gate in predictor.gates.items():
        if gate.decision == ADD:
            emitted.append(hp)
        elif gate.decision == SVM:
            if hp.generator not in features:
                features[hp.generator] = extract_features(instance, query, hp.generator)
            if gate.model.classify(features[hp.generator]) == 1:
                emitted.append(hp)
    return resolve_conflicts(emitted)
