"""MIP backend contract and the iterative transmission-screening driver."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Protocol, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .formulation import Hyperplane, MipModel, build_model, check_hyperplanes, extract_solution
from .powergrid import ConstraintKey, UCInstance, UCSolution
from .sensitivity import scan_violations

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time-limit"

TEST_GAP = 1e-3
TRAINING_GAP = 1e-4


class SolveError(RuntimeError):
    pass


class InfeasibleError(SolveError):
    pass


@dataclass(frozen=True)
class BackendOptions:
    relative_gap: float = TEST_GAP
    time_limit: float = 300.0
    seed: int = 0
    warm_start_repair: bool = True

    def __post_init__(self):
        if not self.relative_gap > 0:
            raise ValueError("relative_gap must be positive")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")


@dataclass(frozen=True)
class WarmStart:
    """Partial assignment of commitment variables; absent (g, t) are undefined."""

    values: dict[tuple[str, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.values.values()):
            raise ValueError("warm start values must be 0 or 1")

    @classmethod
    def from_matrix(cls, instance: UCInstance, x: np.ndarray, mask: np.ndarray | None = None) -> "WarmStart":
        vals = {}
        for gi, g in enumerate(instance.generators):
            for t in range(instance.horizon):
                if mask is None or mask[gi, t]:
                    vals[(g.id, t)] = int(round(float(x[gi, t])))
        return cls(vals)

    def __len__(self) -> int:
        return len(self.values)

    def to_list(self) -> list:
        return [[g, t, v] for (g, t), v in sorted(self.values.items())]

    @classmethod
    def from_list(cls, items) -> "WarmStart":
        return cls({(str(g), int(t)): int(v) for g, t, v in items})


@dataclass
class SolveStats:
    iterations: int = 0
    constraints_added: float = 0.0  # enforced flow rows per period at termination
    wall_time: float = 0.0
    warm_start_accepted: bool = False
    warm_start_gap: float | None = None
    final_gap: float = 0.0
    objective: float = float("nan")
    objective_history: list[float] = field(default_factory=list)
    time_limited: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class BackendResult(NamedTuple):
    status: str
    assignment: np.ndarray | None
    objective: float
    bound: float


class Backend(Protocol):
    def solve(self, model: MipModel, relative_gap: float, time_limit: float, seed: int = 0,
              objective: np.ndarray | None = None, incumbent: np.ndarray | None = None) -> BackendResult: ...


class HighsBackend:
    """Branch-and-cut through the HiGHS Python bindings.

    ``incumbent`` (a full assignment) is handed to the solver as a starting solution.
    """

    def __init__(self, threads: int = 1):
        self.threads = threads

    def solve(self, model: MipModel, relative_gap: float, time_limit: float, seed: int = 0,
              objective: np.ndarray | None = None, incumbent: np.ndarray | None = None) -> BackendResult:
        import highspy

        inf = highspy.kHighsInf
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("mip_rel_gap", relative_gap)
        h.setOptionValue("time_limit", max(float(time_limit), 1e-3))
        h.setOptionValue("random_seed", int(seed))
        h.setOptionValue("threads", self.threads)
        lp = highspy.HighsLp()
        A = model.rows.tocsc()
        lp.num_col_, lp.num_row_ = model.n_vars, model.n_rows
        lp.col_cost_ = np.asarray(model.cost if objective is None else objective, dtype=float)
        lp.col_lower_ = model.lower
        lp.col_upper_ = np.where(np.isinf(model.upper), inf, model.upper)
        lp.row_lower_ = np.where(np.isinf(model.row_lower), -inf, model.row_lower)
        lp.row_upper_ = np.where(np.isinf(model.row_upper), inf, model.row_upper)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        lp.integrality_ = [highspy.HighsVarType.kInteger if v else highspy.HighsVarType.kContinuous
                           for v in model.integrality]
        h.passModel(lp)
        if incumbent is not None:
            sol = highspy.HighsSolution()
            sol.col_value = list(map(float, incumbent))
            h.setSolution(sol)
        h.run()
        status = h.getModelStatus()
        info = h.getInfo()
        if status == highspy.HighsModelStatus.kInfeasible:
            return BackendResult(INFEASIBLE, None, float("nan"), float("nan"))
        if info.primal_solution_status != 2:
            if status in (highspy.HighsModelStatus.kTimeLimit, highspy.HighsModelStatus.kSolutionLimit,
                          highspy.HighsModelStatus.kIterationLimit, highspy.HighsModelStatus.kInterrupt):
                return BackendResult(TIME_LIMIT, None, float("nan"), float("nan"))
            if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
                return BackendResult(INFEASIBLE, None, float("nan"), float("nan"))
            raise SolveError(f"backend failure: {h.modelStatusToString(status)}")
        x = np.array(h.getSolution().col_value)
        obj = float(info.objective_function_value)
        bound = float(info.mip_dual_bound) if np.isfinite(info.mip_dual_bound) else obj
        return BackendResult(OPTIMAL if status == highspy.HighsModelStatus.kOptimal else TIME_LIMIT, x, obj, bound)


class ScipyBackend:
    """HiGHS through ``scipy.optimize.milp``; cannot take a starting solution."""

    def solve(self, model: MipModel, relative_gap: float, time_limit: float, seed: int = 0,
              objective: np.ndarray | None = None, incumbent: np.ndarray | None = None) -> BackendResult:
        c = model.cost if objective is None else objective
        res = milp(
            c,
            integrality=model.integrality,
            bounds=Bounds(model.lower, model.upper),
            constraints=LinearConstraint(model.rows, model.row_lower, model.row_upper),
            options={"mip_rel_gap": relative_gap, "time_limit": max(time_limit, 1e-3), "disp": False},
        )
        if res.status == 2:
            return BackendResult(INFEASIBLE, None, float("nan"), float("nan"))
        if res.status not in (0, 1) and res.x is None:
            raise SolveError(f"backend failure: {res.message}")
        if res.x is None:
            return BackendResult(TIME_LIMIT, None, float("nan"), float("nan"))
        bound = getattr(res, "mip_dual_bound", None)
        bound = res.fun if bound is None or not np.isfinite(bound) else float(bound)
        return BackendResult(OPTIMAL if res.status == 0 else TIME_LIMIT, res.x, float(res.fun), bound)


DEFAULT_BACKEND = HighsBackend()


@dataclass
class BackendOutcome:
    status: str
    assignment: np.ndarray | None
    objective: float
    bound: float
    warm_start_accepted: bool = False
    warm_start_objective: float | None = None

    @property
    def gap(self) -> float:
        if self.assignment is None:
            return float("nan")
        return max(self.objective - self.bound, 0.0) / max(abs(self.objective), 1e-9)

    @property
    def warm_start_gap(self) -> float | None:
        if self.warm_start_objective is None or self.assignment is None:
            return None
        return (self.warm_start_objective - self.objective) / max(abs(self.objective), 1e-9)


def _fix_commitments(model: MipModel, instance: UCInstance, ws: WarmStart) -> tuple[np.ndarray, np.ndarray]:
    lower, upper = model.lower.copy(), model.upper.copy()
    gens = instance.generator_index()
    for (g, t), v in ws.values.items():
        j = model.index.x[gens[g], t]
        lower[j] = upper[j] = float(v)
    return lower, upper


def _try_warm_start(model: MipModel, instance: UCInstance, ws: WarmStart, options: BackendOptions,
                    backend: Backend, budget: float) -> BackendResult | None:
    lower, upper = _fix_commitments(model, instance, ws)
    res = backend.solve(model.with_bounds(lower, upper), options.relative_gap, budget, options.seed)
    if res.assignment is not None:
        return res
    if not options.warm_start_repair:
        return None
    # repair: closest commitment (Hamming distance to the assigned values) ...
    gens = instance.generator_index()
    distance = np.zeros(model.n_vars)
    for (g, t), v in ws.values.items():
        distance[model.index.x[gens[g], t]] = 1.0 if v == 0 else -1.0
    started = time.monotonic()
    res = backend.solve(model, 1e-9, budget, options.seed, objective=distance)
    if res.assignment is None:
        return None
    # ... then the best completion of that commitment
    cols = model.index.x.ravel()
    lower, upper = model.lower.copy(), model.upper.copy()
    lower[cols] = upper[cols] = np.round(res.assignment[cols])
    remaining = max(budget - (time.monotonic() - started), 0.1 * budget)
    res = backend.solve(model.with_bounds(lower, upper), options.relative_gap, remaining, options.seed)
    return res if res.assignment is not None else None


def backend_solve(
    model: MipModel,
    instance: UCInstance,
    warm_starts: Sequence[WarmStart] = (),
    options: BackendOptions = BackendOptions(),
    backend: Backend | None = None,
) -> BackendOutcome:
    """Solve a model, first evaluating warm starts in list order.

    Each warm start has its assigned commitments fixed and the rest solved; if that
    fails and repair is enabled, a bounded repair (10% of the time limit) looks for
    the nearest feasible commitment. The best accepted start seeds the final solve.
    """
    backend = backend or DEFAULT_BACKEND
    best = None
    budget = 0.1 * options.time_limit
    for ws in warm_starts:
        res = _try_warm_start(model, instance, ws, options, backend, budget)
        if res is not None and (best is None or res.objective < best.objective):
            best = res
    res = backend.solve(model, options.relative_gap, options.time_limit, options.seed,
                        incumbent=None if best is None else best.assignment)
    outcome = BackendOutcome(res.status, res.assignment, res.objective, res.bound)
    if best is not None:
        outcome.warm_start_accepted = True
        outcome.warm_start_objective = best.objective
    return outcome


@dataclass(frozen=True)
class Hints:
    enforce: frozenset[ConstraintKey] = frozenset()
    warm_starts: tuple[WarmStart, ...] = ()
    hyperplanes: tuple[Hyperplane, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "enforce", frozenset(self.enforce))
        object.__setattr__(self, "warm_starts", tuple(self.warm_starts))
        object.__setattr__(self, "hyperplanes", tuple(self.hyperplanes))


class ScucResult(NamedTuple):
    solution: UCSolution
    stats: SolveStats
    enforced_final: frozenset[ConstraintKey]


def solve_scuc(
    instance: UCInstance,
    hints: Hints = Hints(),
    options: BackendOptions = BackendOptions(),
    backend: Backend | None = None,
    max_iterations: int = 50,
    max_violations_per_period: int = 15,
) -> ScucResult:
    """Iterative screening: solve the relaxation, add the worst violated flow rows, repeat.

    Starts from the hinted flow rows only; stops once the scan finds no violation.
    Warm starts are offered to the first solve; hyperplanes persist throughout.
    """
    started = time.monotonic()
    check_hyperplanes(instance, hints.hyperplanes)
    enforced = set(hints.enforce)
    stats = SolveStats()
    warm_starts = hints.warm_starts
    ws_obj = None
    while True:
        if stats.iterations >= max_iterations:
            raise SolveError(f"no convergence after {max_iterations} iterations "
                             f"({len(enforced)} flow rows enforced)")
        stats.iterations += 1
        model = build_model(instance, enforced, hints.hyperplanes)
        remaining = options.time_limit - (time.monotonic() - started)
        if remaining <= 0:
            raise SolveError("time limit reached before a screened solution was found")
        opts = BackendOptions(options.relative_gap, remaining, options.seed, options.warm_start_repair)
        outcome = backend_solve(model, instance, warm_starts, opts, backend)
        if warm_starts:
            stats.warm_start_accepted = outcome.warm_start_accepted
            ws_obj = outcome.warm_start_objective
            warm_starts = ()
        if outcome.status == INFEASIBLE:
            raise InfeasibleError(f"relaxation infeasible at iteration {stats.iterations}")
        if outcome.assignment is None:
            raise SolveError("time limit reached without a feasible solution")
        stats.time_limited |= outcome.status == TIME_LIMIT
        stats.final_gap = outcome.gap
        solution = extract_solution(instance, model, outcome.assignment)
        stats.objective_history.append(solution.objective)
        violations = scan_violations(instance, solution, enforced, max_violations_per_period)
        if not violations:
            break
        log.debug("iteration %d: adding %d flow rows", stats.iterations, len(violations))
        enforced.update(violations.keys)
    stats.objective = solution.objective
    stats.constraints_added = len(enforced) / instance.horizon
    if stats.warm_start_accepted and ws_obj is not None:
        stats.warm_start_gap = (ws_obj - solution.objective) / max(abs(solution.objective), 1e-9)
    stats.wall_time = time.monotonic() - started
    return ScucResult(solution, stats, frozenset(enforced))


def solve_full(instance: UCInstance, options: BackendOptions = BackendOptions(),
               backend: Backend | None = None) -> tuple[UCSolution, float]:
    """Reference solve with every non-islanding flow constraint enforced up front."""
    from .sensitivity import sensitivity_for

    keys = sensitivity_for(instance.network).all_keys(instance.horizon)
    model = build_model(instance, keys)
    outcome = backend_solve(model, instance, (), options, backend)
    if outcome.status == INFEASIBLE:
        raise InfeasibleError("instance is infeasible with all flow constraints")
    if outcome.assignment is None:
        raise SolveError("time limit reached without a feasible solution")
    return extract_solution(instance, model, outcome.assignment), outcome.gap
