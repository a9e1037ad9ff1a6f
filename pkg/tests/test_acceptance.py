"""Acceptance criteria 1-10; each test records one PASS/FAIL line for the summary."""

import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from scuc_lab.fixtures import load_fixture, reference_stats
from scuc_lab.formulation import HyperplaneKind
from scuc_lab.harness import ExperimentConfig, run_test, run_training
from scuc_lab.learn import (ADD, DEFAULT_THRESHOLDS, TransmissionPredictorConfig, WarmStartPredictorConfig,
                            fit_affine_predictor, hyperplane_labels, kfold_evaluate, kfold_predictions,
                            model_objective, precision_recall, predict_affine, predict_transmission,
                            predict_warm_start, svm_train)
from scuc_lab.learn.affine import gate_decision
from scuc_lab.powergrid import ConstraintKey, instance_to_dict, validate_solution
from scuc_lab.sampling import ShiftSpec, draw_parameters, generate_ood_variation, generate_variation
from scuc_lab.sensitivity import build_isf, build_lodf, build_outage_isf
from scuc_lab.solve import TEST_GAP, BackendOptions, Hints, solve_full, solve_scuc

from conftest import ACCEPTANCE_LINES
from oracles import dc_flows, is_bridge, random_network
from stores import constructed_store, scalar_params
from test_learn_svm import qp_oracle

pytestmark = pytest.mark.slow

FIXTURE_NAMES = ("case6", "case14", "case30")
VARIATIONS = 20


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# ------------------------------------------------------------------ 1 and 4

@pytest.fixture(scope="module")
def lazy_runs():
    """Screened solve of 20 seeded variations of each fixture, with the variation kept."""
    stats = reference_stats()
    options = BackendOptions(relative_gap=TEST_GAP)
    runs = []
    for name in FIXTURE_NAMES:
        base = load_fixture(name)
        for seed in range(VARIATIONS):
            _, inst = generate_variation(base, stats, ShiftSpec(), seed)
            runs.append((name, seed, inst, solve_scuc(inst, options=options)))
    return runs


def test_criterion_1_lazy_matches_full(lazy_runs):
    options = BackendOptions(relative_gap=TEST_GAP)
    worst_gap, invalid = 0.0, []
    for name, seed, inst, result in lazy_runs:
        full, _ = solve_full(inst, options)
        gap = abs(result.stats.objective - full.objective) / abs(full.objective)
        worst_gap = max(worst_gap, gap)
        if not validate_solution(inst, result.solution, tol=1e-6).feasible:
            invalid.append((name, seed))
    ok = worst_gap <= 2 * TEST_GAP and not invalid
    verdict(1, ok, f"{len(lazy_runs)} variations, worst |lazy-full| gap {worst_gap:.2e} (limit {2 * TEST_GAP:.0e}), "
                   f"N-1 invalid {invalid}")


def test_criterion_4_perfect_hints_single_iteration(lazy_runs):
    options = BackendOptions(relative_gap=TEST_GAP)
    counts = [solve_scuc(inst, Hints(enforce=result.enforced_final), options).stats.iterations
              for _, _, inst, result in lazy_runs]
    share = np.mean(np.array(counts) == 1)
    verdict(4, share == 1.0, f"iterations = 1 on {share:.0%} of {len(counts)} variations")


# ------------------------------------------------------------------ 2

def test_criterion_2_sensitivities():
    worst, worst_diag, checked = 0.0, 0.0, 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        net = random_network(rng, n, int(rng.integers(0, 7)))
        isf = build_isf(net)
        inj = rng.normal(0, 50, size=n)
        inj[net.bus_index[net.slack_bus]] -= inj.sum()
        base = dc_flows(net, inj)
        worst = max(worst, float(np.max(np.abs(isf.matrix @ inj - [base[l.id] for l in net.lines]))))
        lodf, _ = build_lodf(net, isf)
        worst_diag = max(worst_diag, float(np.max(np.abs(np.diag(lodf) + 1.0))))
        for outage in net.lines:
            if is_bridge(net, outage.id):
                continue
            post = dc_flows(net, inj, removed=outage.id)
            out = build_outage_isf(net, isf, outage.id)
            worst = max(worst, float(np.max(np.abs(out.matrix @ inj - [post[m] for m in out.monitored]),
                                            initial=0.0)))
            checked += 1
    ok = worst <= 1e-8 and worst_diag <= 1e-10
    verdict(2, ok, f"200 networks, {checked} outages, worst flow error {worst:.1e}, worst |LODF(l,l)+1| "
                   f"{worst_diag:.1e}")


# ------------------------------------------------------------------ 3

def test_criterion_3_predictor_degeneracies():
    base = load_fixture("case6")
    G, T = len(base.generators), base.horizon
    keys = [ConstraintKey("l01", None, 0), ConstraintKey("l02", "l03", 4), ConstraintKey("l05", None, 9)]
    subsets = [frozenset(c) for r in range(4) for c in itertools.combinations(keys, r)]
    failures = []
    tr_cases = 0
    for s in (1, 2, 3):
        params = scalar_params(base, list(np.linspace(0, 1, s)))
        for sets in itertools.product(subsets, repeat=s):
            store = constructed_store([np.zeros((G, T))] * s, sets, params, base)
            got = predict_transmission(store, params[0], TransmissionPredictorConfig(k=s, p_threshold=1e-9))
            if got != frozenset().union(*sets):
                failures.append(("tr", sets))
            tr_cases += 1
    ws_cases = 0
    for k in (1, 3, 5):
        params = scalar_params(base, list(np.linspace(0, 1, k)))
        for bits in itertools.product((0, 1), repeat=k * 2 if k < 5 else k):
            votes = np.array(bits).reshape(k, -1)
            xs = []
            for row in votes:
                x = np.zeros((G, T))
                x[0, :votes.shape[1]] = row
                xs.append(x)
            store = constructed_store(xs, None, params, base)
            ws, = predict_warm_start(store, params[0], WarmStartPredictorConfig(k=k, p=0.5))
            expected = (votes.mean(axis=0) > 0.5).astype(int)
            if len(ws) != G * T or [ws.values[("g01", t)] for t in range(votes.shape[1])] != expected.tolist():
                failures.append(("ws", bits))
            ws_cases += 1
    gate_ok = all(gate_decision(1.0, t) == ADD for t in DEFAULT_THRESHOLDS.values())
    rng = np.random.default_rng(0)
    xs = [(rng.uniform(size=(G, T)) < 0.5).astype(float) for _ in range(6)]
    for x in xs:
        x[0] = 1  # g01 always on: FixOne(g01, t) has z = 1 everywhere
        x[1] = 0
    store = constructed_store(xs)
    predictor = fit_affine_predictor(store)
    aff_cases = 0
    for hp, z in hyperplane_labels(store).items():
        if z.mean() >= DEFAULT_THRESHOLDS[hp.kind].z_fix:
            aff_cases += 1
            gate_ok &= predictor.gates[hp].decision == ADD
    emitted = predict_affine(predictor, store.instance(0), store.records[0].params)
    gate_ok &= {(h.generator, h.period) for h in emitted if h.kind is HyperplaneKind.FIX_ONE} >= \
        {("g01", t) for t in range(T)}
    ok = not failures and gate_ok and aff_cases >= 2 * T
    verdict(3, ok, f"tr union {tr_cases} stores, ws majority {ws_cases} stores, affine z=1 gates {aff_cases}, "
                   f"failures {failures[:3]}")


# ------------------------------------------------------------------ 5, 6, 7

PIPELINE = ExperimentConfig(base="case30", train_samples=100, test_samples=20,
                            roster=("zero", "tr:knn:100", "ws:knn:50:90", "aff:svm", "aff:C"))


@pytest.fixture(scope="module")
def pipeline():
    store = run_training(PIPELINE)
    rows, records = run_test(store, PIPELINE)
    return {r.method: r for r in rows}, records


def test_criterion_5_transmission_predictor(pipeline):
    rows, records = pipeline
    its = [r.iterations for r in records if r.method == "tr:knn:100"]
    share = float(np.mean(np.array(its) == 1))
    ok = rows["tr:knn:100"].mean_iterations <= rows["zero"].mean_iterations and share >= 0.8
    verdict(5, ok, f"tr:knn:100 mean iterations {rows['tr:knn:100'].mean_iterations:.2f} vs zero "
                   f"{rows['zero'].mean_iterations:.2f}; single iteration on {share:.0%}")


def test_criterion_6_warm_starts(pipeline):
    rows, records = pipeline
    ws = [r for r in records if r.method == "ws:knn:50:90"]
    accepted = [r for r in ws if r.warm_start_accepted]
    worst = max((r.warm_start_gap for r in accepted), default=float("inf"))
    rate = len(accepted) / len(ws)
    ok = rate >= 0.9 and worst <= 0.005
    verdict(6, ok, f"ws:knn:50:90 accepted on {rate:.0%}, worst accepted-start gap {worst:.4%}")


def test_criterion_7_affine_safety(pipeline):
    rows, records = pipeline
    svm = rows["aff:svm"]
    c_rate = 1.0 - rows["aff:C"].feasible_rate
    bad = [(r.seed, r.gap) for r in records if r.method == "aff:svm" and (not r.feasible or r.gap > 0.0025)]
    worst = svm.gap_p100 if svm.gap_p100 is not None else float("nan")
    ok = svm.feasible_rate == 1.0 and worst <= 0.0025
    verdict(7, ok, f"aff:svm feasible {svm.feasible_rate:.0%}, worst gap {worst:.3%} (limit 0.25%), offending "
                   f"(seed, gap) {bad}; aff:C infeasibility rate {c_rate:.0%} (reported only)")


# ------------------------------------------------------------------ 8

def test_criterion_8_sampling_statistics():
    base, stats = load_fixture("case6"), reference_stats()
    G = len(base.generators)
    draws = 10_000 // G
    ind = [draw_parameters(base, stats, ShiftSpec(), s) for s in range(draws)]
    alpha = np.concatenate([p.cost_multipliers for p in ind])[:10_000]
    ood = [generate_ood_variation(base, stats, seed=s)[0] for s in range(draws)]
    ood_alpha = np.concatenate([p.cost_multipliers for p in ood])[:10_000]
    ood_peak = np.array([p.peak_fraction for p in ood])
    tails = float(np.mean((ood_alpha < 1.0) | (ood_alpha > 1.1)))
    shares = []
    for s in range(50):
        _, inst = generate_variation(base, stats, ShiftSpec(), s)
        shares.append(abs(inst.demand.sum(axis=0) / inst.system_load - 1.0).max())
    checks = {
        "in-dist alpha mean": abs(alpha.mean() - 1.0) <= 0.003,
        "OOD alpha mean": abs(ood_alpha.mean() - 1.05) <= 0.003,
        "OOD peak mean": abs(ood_peak.mean() - 0.618) <= 0.002,
        "OOD tail rate": abs(tails - 0.0033) <= 0.003,
        "shares sum to 1": max(shares) <= 1e-12,
    }
    verdict(8, all(checks.values()),
            f"alpha {alpha.mean():.4f} (n={alpha.size}), OOD alpha {ood_alpha.mean():.4f} (n={ood_alpha.size}), "
            f"OOD peak {ood_peak.mean():.4f}, tail {tails:.2%}, failed {[k for k, v in checks.items() if not v]}")


# ------------------------------------------------------------------ 9

def test_criterion_9_svm_and_cv():
    worst = 0.0
    for seed in range(60):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(2, 21)), int(rng.integers(1, 5))
        C = float(rng.choice([0.1, 1.0, 10.0, 1000.0]))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, size=d)
        h = rng.choice([-1, 1], size=n)
        h[0], h[1] = 1, -1
        m = svm_train(X, h, C, standardize=bool(seed % 2))
        oracle = qp_oracle(m.transform(X), h, C)
        worst = max(worst, model_objective(m, X, h, C) / oracle - 1.0)
    X4 = np.array([[0.0], [1.0], [3.0], [4.0]])
    hand = [
        precision_recall([1, 1, -1, -1], [1, -1, 1, -1]) == (0.5, 0.5),
        precision_recall([-1, -1], [-1, -1]) == (1.0, 1.0),
        kfold_predictions(X4, [-1, 1, 1, 1], 4, C=1e4).tolist() == [1, -1, 1, 1],
        np.allclose(kfold_evaluate(X4, [-1, 1, 1, 1], 4, C=1e4), (2 / 3, 2 / 3)),
        kfold_predictions(X4, [1, 1, -1, -1], 2).tolist() == [-1, -1, 1, 1],
    ]
    ok = worst <= 0.01 and all(hand)
    verdict(9, ok, f"60 QPs, worst objective excess over oracle {worst:.2e}; hand-enumerated cases "
                   f"{sum(hand)}/{len(hand)}")


# ------------------------------------------------------------------ 10

def test_criterion_10_determinism(tmp_path):
    base, stats = load_fixture("case14"), reference_stats()
    same_instances = all(
        json.dumps(instance_to_dict(generate_variation(base, stats, ShiftSpec(), s)[1])) ==
        json.dumps(instance_to_dict(generate_variation(base, stats, ShiftSpec(), s)[1])) for s in range(10))
    cfg = ExperimentConfig(base="case6", train_samples=6)
    dumps = []
    hint_sets = []
    for run in ("a", "b"):
        store = run_training(cfg)
        store.save(tmp_path / run)
        dumps.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
        params, inst = generate_variation(store.base, stats, ShiftSpec(), 100_000)
        hint_sets.append((
            predict_transmission(store, params, TransmissionPredictorConfig(k=6, p_threshold=10)),
            [ws.values for ws in predict_warm_start(store, params, WarmStartPredictorConfig(k=5, p=0.6))],
            predict_affine(fit_affine_predictor(store), inst, params),
        ))
    same_store = dumps[0] == dumps[1]
    same_hints = hint_sets[0] == hint_sets[1]
    verdict(10, same_instances and same_store and same_hints,
            f"instances identical {same_instances}, store files identical {same_store} ({len(dumps[0])} files), "
            f"hint sets identical {same_hints}")
