"""Training and test phases, per-method metrics and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .fixtures import FIXTURES, load_fixture, reference_stats
from .formulation import Hyperplane, HyperplaneKind
from .learn import (AffineGateConfig, AffinePredictor, TrainingRecord, TrainingStore, TransmissionPredictorConfig,
                    WarmStartPredictorConfig, fit_affine_predictor, predict_affine, predict_transmission,
                    predict_warm_start)
from .powergrid import UCInstance, load_instance
from .sampling import ProfileStats, ShiftSpec, fit_profile_stats, generate_variation, read_profile_csv
from .solve import (TEST_GAP, TRAINING_GAP, BackendOptions, Hints, InfeasibleError, ScucResult, SolveError,
                    WarmStart, solve_scuc)

log = logging.getLogger(__name__)

WORKERS_ENV = "SCUC_LAB_WORKERS"
PERCENTILES = (50, 80, 95, 100)


class TrainingError(RuntimeError):
    pass


# ------------------------------------------------------------------ methods

@dataclass(frozen=True)
class Method:
    """Parsed roster entry, e.g. ``tr:knn:300`` or ``ws:knn:50:90``."""

    name: str
    family: str  # zero, tr, ws, aff
    variant: str  # perf, nearest, all, knn, collect, svm, A, B, C
    args: tuple[int, ...] = ()

    @property
    def needs_reference(self) -> bool:
        return self.variant == "perf"


def parse_method(name: str) -> Method:
    parts = name.strip().split(":")
    family = parts[0]
    try:
        if parts == ["zero"]:
            return Method(name, "zero", "")
        if family == "tr" and len(parts) == 2 and parts[1] in ("perf", "nearest", "all"):
            return Method(name, "tr", parts[1])
        if family == "tr" and len(parts) == 3 and parts[1] == "knn":
            return Method(name, "tr", "knn", (int(parts[2]),))
        if family == "ws" and parts[1:] == ["perf"]:
            return Method(name, "ws", "perf")
        if family == "ws" and len(parts) == 4 and parts[1] == "knn":
            k, p = int(parts[2]), int(parts[3])
            WarmStartPredictorConfig(k=max(k, 1), p=p / 100)
            return Method(name, "ws", "knn", (k, p))
        if family == "ws" and len(parts) == 3 and parts[1] == "collect":
            return Method(name, "ws", "collect", (int(parts[2]),))
        if family == "aff" and len(parts) == 2 and parts[1] in ("svm", "A", "B", "C", "perf"):
            return Method(name, "aff", parts[1])
    except ValueError as exc:
        raise ValueError(f"bad method {name!r}: {exc}") from exc
    raise ValueError(f"unknown method {name!r}")


# ------------------------------------------------------------------ config

def _options_to_dict(o: BackendOptions) -> dict:
    return asdict(o)


@dataclass(frozen=True)
class ExperimentConfig:
    base: str = "case30"  # fixture name or instance path
    train_samples: int = 300
    test_samples: int = 50
    roster: tuple[str, ...] = ("zero", "tr:knn:300", "ws:knn:50:90", "aff:svm")
    train_options: BackendOptions = BackendOptions(relative_gap=TRAINING_GAP)
    test_options: BackendOptions = BackendOptions(relative_gap=TEST_GAP)
    train_seed: int = 0
    test_seed: int = 100_000
    train_spec: ShiftSpec = field(default_factory=ShiftSpec)
    test_spec: ShiftSpec = field(default_factory=ShiftSpec)
    profile: str | None = None  # days x hours CSV; the shipped reference profile when None
    output: str = "scuc-lab-run"
    online: bool = False
    workers: int | None = None  # None: take the environment variable, else 1

    def __post_init__(self):
        object.__setattr__(self, "roster", tuple(self.roster))
        if self.train_samples < 1 or self.test_samples < 1:
            raise ValueError("sample counts must be at least 1")
        if not self.roster:
            raise ValueError("roster must not be empty")
        for name in self.roster:
            parse_method(name)
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be at least 1")

    def methods(self) -> list[Method]:
        """Roster with ``zero`` first; it is always run as the paired reference."""
        names = ["zero"] + [n for n in self.roster if n != "zero"]
        return [parse_method(n) for n in names]

    def load_base(self) -> UCInstance:
        return load_fixture(self.base) if self.base in FIXTURES else load_instance(self.base)

    def load_stats(self) -> ProfileStats:
        return fit_profile_stats(read_profile_csv(self.profile)) if self.profile else reference_stats()

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["roster"] = list(self.roster)
        d["train_options"] = _options_to_dict(self.train_options)
        d["test_options"] = _options_to_dict(self.test_options)
        d["train_spec"] = json.loads(self.train_spec.to_json())
        d["test_spec"] = json.loads(self.test_spec.to_json())
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("train_options", "test_options"):
            if key in d:
                d[key] = BackendOptions(**d[key])
        for key in ("train_spec", "test_spec"):
            if key in d:
                spec = d[key]
                if spec == "ood":
                    d[key] = ShiftSpec.out_of_distribution()
                else:
                    d[key] = ShiftSpec.from_json(json.dumps(spec))
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def worker_count(cfg: ExperimentConfig) -> int:
    """Configured training workers, capped by the environment variable when set."""
    env = os.environ.get(WORKERS_ENV)
    if not env:
        return cfg.workers or 1
    try:
        cap = int(env)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(cfg.workers, cap) if cfg.workers else cap)


# ------------------------------------------------------------------ training

def train_seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.train_seed + i for i in range(cfg.train_samples)]


def test_seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.test_seed + i for i in range(cfg.test_samples)]


def _solve_training(base, stats, cfg, seed, hints=Hints()) -> TrainingRecord:
    params, instance = generate_variation(base, stats, cfg.train_spec, seed)
    try:
        result = solve_scuc(instance, hints, cfg.train_options)
    except SolveError as exc:
        raise TrainingError(f"training variation seed {seed} failed: {exc}") from exc
    return TrainingRecord(params, result.enforced_final, result.solution, seed)


def run_training(cfg: ExperimentConfig, base: UCInstance | None = None, stats: ProfileStats | None = None,
                 online_k: int | None = None) -> TrainingStore:
    """Solve every training variation with empty hints and collect the records.

    In online mode samples are solved in order and each one is hinted by a
    transmission predictor over the records solved before it.
    """
    base = base if base is not None else cfg.load_base()
    stats = stats if stats is not None else cfg.load_stats()
    store = TrainingStore(base, reserve_fraction=cfg.train_spec.reserve_fraction)
    seeds = train_seeds(cfg)
    if cfg.online:
        k = online_k or cfg.train_samples
        for seed in seeds:
            hints = Hints()
            if len(store):
                params, _ = generate_variation(base, stats, cfg.train_spec, seed)
                tr = TransmissionPredictorConfig(k=min(k, len(store)))
                hints = Hints(enforce=predict_transmission(store, params, tr))
            store.add(_solve_training(base, stats, cfg, seed, hints))
        return store
    workers = worker_count(cfg)
    if workers == 1:
        records = [_solve_training(base, stats, cfg, seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda s: _solve_training(base, stats, cfg, s), seeds))
    for record in records:
        store.add(record)
    return store


# ------------------------------------------------------------------ test phase

@dataclass
class TestRecord:
    __test__ = False  # not a pytest class despite the name
    method: str
    seed: int
    iterations: int | None
    violations: float | None  # enforced flow rows per period at termination
    wall_time: float
    hint_time: float
    warm_starts: int
    warm_start_accepted: bool
    warm_start_gap: float | None
    feasible: bool
    objective: float | None
    gap: float | None  # against the zero run on the same variation
    time_limited: bool = False
    hyperplanes: int = 0


@dataclass
class MetricsRow:
    method: str
    samples: int
    mean_iterations: float
    mean_violations: float
    mean_wall_time: float
    speedup: float
    ws_success_rate: float | None
    ws_mean_gap: float | None
    feasible_rate: float
    gap_p50: float | None
    gap_p80: float | None
    gap_p95: float | None
    gap_p100: float | None
    time_limited: int = 0


WALL_TIME_COLUMNS = ("mean_wall_time", "speedup")


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Smallest value with at least ``q`` percent of the data at or below it."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


class Predictors:
    """Lazily fitted predictors over one store, shared by all test variations."""

    def __init__(self, store: TrainingStore):
        self.store = store
        self._affine: dict[str, AffinePredictor] = {}

    def affine(self, variant: str) -> AffinePredictor:
        if variant not in self._affine:
            self._affine[variant] = fit_affine_predictor(self.store, AffineGateConfig.variant(variant))
        return self._affine[variant]

    def transmission(self, method: Method, params):
        s = len(self.store)
        if method.variant == "nearest":
            cfg = TransmissionPredictorConfig(k=1, p_threshold=0.0)
        elif method.variant == "all":
            cfg = TransmissionPredictorConfig(k=s, p_threshold=1e-9)
        else:
            cfg = TransmissionPredictorConfig(k=min(method.args[0], s) if method.args else s)
        return predict_transmission(self.store, params, cfg)


def build_hints(method: Method, predictors: Predictors, instance: UCInstance, params,
                reference: ScucResult | None) -> Hints:
    if method.family == "zero":
        return Hints()
    if method.variant == "perf" and reference is None:
        raise ValueError(f"{method.name} needs the zero run of the same variation")
    if method.family == "tr":
        if method.variant == "perf":
            return Hints(enforce=reference.enforced_final)
        return Hints(enforce=predictors.transmission(method, params))
    # warm-start and affine methods sit on top of tr:knn over the whole store
    enforce = predictors.transmission(Method("tr:knn", "tr", "knn"), params)
    if method.family == "ws":
        if method.variant == "perf":
            starts = [WarmStart.from_matrix(instance, reference.solution.commitment)]
        elif method.variant == "collect":
            n = method.args[0]
            starts = predict_warm_start(predictors.store, params, WarmStartPredictorConfig(mode="collect", n=n))
        else:
            k, p = method.args
            cfg = WarmStartPredictorConfig(k=min(k, len(predictors.store)), p=p / 100)
            starts = predict_warm_start(predictors.store, params, cfg)
        return Hints(enforce=enforce, warm_starts=starts)
    if method.variant == "perf":
        x = np.rint(reference.solution.commitment)
        planes = [Hyperplane(HyperplaneKind.FIX_ONE if x[gi, t] else HyperplaneKind.FIX_ZERO, g.id, t)
                  for gi, g in enumerate(instance.generators) for t in range(instance.horizon)]
        return Hints(enforce=enforce, hyperplanes=planes)
    return Hints(enforce=enforce, hyperplanes=predict_affine(predictors.affine(method.variant), instance, params))


def run_method(method: Method, predictors: Predictors, instance: UCInstance, params, seed: int,
               options: BackendOptions, reference: ScucResult | None) -> tuple[TestRecord, ScucResult | None]:
    started = time.monotonic()
    hints = build_hints(method, predictors, instance, params, reference)
    hint_time = time.monotonic() - started
    try:
        result = solve_scuc(instance, hints, options)
    except InfeasibleError:
        if method.family != "aff":
            raise
        wall = time.monotonic() - started
        return TestRecord(method.name, seed, None, None, wall, hint_time, 0, False, None, False, None, None,
                          hyperplanes=len(hints.hyperplanes)), None
    wall = time.monotonic() - started
    st = result.stats
    gap = None
    if reference is not None:
        gap = (st.objective - reference.stats.objective) / abs(reference.stats.objective)
    elif method.family == "zero":
        gap = 0.0
    record = TestRecord(method.name, seed, st.iterations, st.constraints_added, wall, hint_time,
                        len(hints.warm_starts), st.warm_start_accepted, st.warm_start_gap, True, st.objective, gap,
                        st.time_limited, len(hints.hyperplanes))
    return record, result


def run_test(store: TrainingStore, cfg: ExperimentConfig, stats: ProfileStats | None = None,
             progress: Callable[[str], None] | None = None) -> tuple[list[MetricsRow], list[TestRecord]]:
    """Solve every test variation with every roster method (paired) and summarize."""
    base = store.base
    store.check_compatible(cfg.load_base())
    stats = stats if stats is not None else cfg.load_stats()
    predictors = Predictors(store)
    methods = cfg.methods()
    records: list[TestRecord] = []
    for seed in test_seeds(cfg):
        params, instance = generate_variation(base, stats, cfg.test_spec, seed)
        reference = None
        for method in methods:
            try:
                record, result = run_method(method, predictors, instance, params, seed, cfg.test_options, reference)
            except SolveError as exc:
                raise SolveError(f"test variation seed {seed}, method {method.name}: {exc}") from exc
            if method.family == "zero":
                reference = result
            records.append(record)
            if progress:
                progress(f"seed {seed} {method.name}: {record.wall_time:.2f}s it={record.iterations}")
    wanted = set(cfg.roster)
    rows = [row for row in summarize(records) if row.method in wanted]
    return rows, records


def summarize(records: Sequence[TestRecord]) -> list[MetricsRow]:
    by_method: dict[str, list[TestRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    zero_time = None
    if "zero" in by_method:
        zero_time = float(np.mean([r.wall_time for r in by_method["zero"]]))
    rows = []
    for name, recs in by_method.items():
        solved = [r for r in recs if r.feasible]
        mean_time = float(np.mean([r.wall_time for r in recs]))
        gaps = [r.gap for r in solved if r.gap is not None]
        with_ws = [r for r in recs if r.warm_starts > 0]
        accepted = [r for r in with_ws if r.warm_start_accepted and r.warm_start_gap is not None]
        pct = {q: (nearest_rank(gaps, q) if gaps else None) for q in PERCENTILES}
        rows.append(MetricsRow(
            method=name,
            samples=len(recs),
            mean_iterations=float(np.mean([r.iterations for r in solved])) if solved else float("nan"),
            mean_violations=float(np.mean([r.violations for r in solved])) if solved else float("nan"),
            mean_wall_time=mean_time,
            speedup=zero_time / mean_time if zero_time is not None and mean_time > 0 else float("nan"),
            ws_success_rate=(sum(r.warm_start_accepted for r in with_ws) / len(with_ws)) if with_ws else None,
            ws_mean_gap=float(np.mean([r.warm_start_gap for r in accepted])) if accepted else None,
            feasible_rate=len(solved) / len(recs),
            gap_p50=pct[50], gap_p80=pct[80], gap_p95=pct[95], gap_p100=pct[100],
            time_limited=sum(r.time_limited for r in recs),
        ))
    if zero_time is not None:
        for row in rows:
            if row.method == "zero":
                row.speedup = 1.0
    return rows


# ------------------------------------------------------------------ reporting

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(MetricsRow)]
    writer.writerow(names)
    for row in rows:
        writer.writerow([_cell(getattr(row, n)) for n in names])
    return buf.getvalue()


def run_manifest(cfg: ExperimentConfig | None = None, extra: dict | None = None) -> dict:
    import highspy
    import scipy

    try:
        from importlib.metadata import version
        highs_version = version("highspy")
    except Exception:  # pragma: no cover - metadata missing in odd installs
        highs_version = getattr(highspy, "__version__", "unknown")
    manifest = {
        "scuc_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "highspy": highs_version,
    }
    if cfg is not None:
        manifest["config"] = cfg.to_dict()
        manifest["train_seeds"] = train_seeds(cfg)
        manifest["test_seeds"] = test_seeds(cfg)
    manifest.update(extra or {})
    return manifest


def report(rows: Sequence[MetricsRow], out_dir: str | Path, fmt: str = "csv", cfg: ExperimentConfig | None = None,
           records: Sequence[TestRecord] | None = None) -> list[Path]:
    """Write the metrics table (CSV or JSON) plus a JSON run manifest."""
    if not rows:
        raise ValueError("no metrics to report")
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        path = out / "metrics.csv"
        path.write_text(metrics_csv(rows))
    else:
        path = out / "metrics.json"
        path.write_text(json.dumps([asdict(r) for r in rows], indent=1) + "\n")
    written.append(path)
    if records is not None:
        rec_path = out / "records.json"
        rec_path.write_text(json.dumps([asdict(r) for r in records], indent=1) + "\n")
        written.append(rec_path)
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(run_manifest(cfg), indent=1, sort_keys=True) + "\n")
    written.append(man_path)
    return written


def load_records(path: str | Path) -> list[TestRecord]:
    return [TestRecord(**d) for d in json.loads(Path(path).read_text())]
