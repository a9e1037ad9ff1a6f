"""Command-line entry point: ``scuc-lab generate|train|test|solve|report``.

Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .fixtures import FIXTURES, load_fixture, reference_stats
from .formulation import Hyperplane, ModelError
from .harness import ExperimentConfig, TrainingError, load_records, metrics_csv, report, run_test, run_training, \
    summarize
from .learn import StoreMismatchError, TrainingStore
from .powergrid import ConstraintKey, ParseError, ValidationError, load_instance, save_instance, validate_solution
from .sampling import ShiftSpec, fit_profile_stats, generate_variation, read_profile_csv
from .solve import BackendOptions, Hints, SolveError, WarmStart, solve_scuc

EXIT_OK, EXIT_INVALID, EXIT_SOLVE = 0, 2, 3


def _base(ref: str):
    return load_fixture(ref) if ref in FIXTURES else load_instance(ref)


def load_hints(path: str | Path) -> Hints:
    """Read hints JSON: ``enforce`` [[line, outage|null, t]], ``warm_starts`` [[[g, t, v], ...]],
    ``hyperplanes`` [[kind, g, t]]; every key is optional."""
    d = json.loads(Path(path).read_text())
    return Hints(
        enforce=frozenset(ConstraintKey.from_list(k) for k in d.get("enforce", [])),
        warm_starts=tuple(WarmStart.from_list(ws) for ws in d.get("warm_starts", [])),
        hyperplanes=tuple(Hyperplane.from_list(h) for h in d.get("hyperplanes", [])),
    )


def cmd_generate(args) -> int:
    base = _base(args.base)
    stats = fit_profile_stats(read_profile_csv(args.profile)) if args.profile else reference_stats()
    spec = ShiftSpec.out_of_distribution(args.reserve_fraction) if args.ood else ShiftSpec(
        reserve_fraction=args.reserve_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {}
    for seed in range(args.seed, args.seed + args.samples):
        p, inst = generate_variation(base, stats, spec, seed)
        save_instance(inst, out / f"variation_{seed}.json")
        params[str(seed)] = p.to_dict()
    (out / "params.json").write_text(json.dumps(params, indent=1) + "\n")
    print(f"wrote {args.samples} variations to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    store = run_training(cfg)
    target = Path(args.store or Path(cfg.output) / "store")
    store.save(target)
    print(f"stored {len(store)} training records in {target}")
    return EXIT_OK


def cmd_test(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    store = TrainingStore.load(args.store, cfg.load_base())
    progress = print if args.verbose else None
    rows, records = run_test(store, cfg, progress=progress)
    paths = report(rows, args.out or cfg.output, "csv", cfg, records)
    sys.stdout.write(metrics_csv(rows))
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    hints = load_hints(args.hints) if args.hints else Hints()
    options = BackendOptions(relative_gap=args.gap, time_limit=args.time_limit, seed=args.seed)
    result = solve_scuc(instance, hints, options)
    check = validate_solution(instance, result.solution)
    payload = {
        "stats": result.stats.to_dict(),
        "enforced_final": [k.to_list() for k in sorted(result.enforced_final, key=ConstraintKey.sort_key)],
        "feasible": check.feasible,
        "solution": result.solution.to_dict(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1) + "\n")
    summary = {k: payload["stats"][k] for k in ("objective", "iterations", "wall_time", "warm_start_accepted")}
    summary["feasible"] = check.feasible
    print(json.dumps(summary))
    return EXIT_OK if check.feasible else EXIT_SOLVE


def cmd_report(args) -> int:
    rows = summarize(load_records(args.metrics))
    if args.out:
        for path in report(rows, args.out, args.format):
            print(path)
    elif args.format == "csv":
        sys.stdout.write(metrics_csv(rows))
    else:
        print(json.dumps([asdict(r) for r in rows], indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scuc-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write seeded instance variations")
    p.add_argument("--base", required=True, help=f"instance file or fixture name ({', '.join(FIXTURES)})")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", help="days x hours load CSV (default: shipped reference profile)")
    p.add_argument("--ood", action="store_true", help="draw from the shifted Gaussian distributions")
    p.add_argument("--reserve-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="solve training variations into a store")
    p.add_argument("--config", required=True)
    p.add_argument("--store", help="store directory (default: <output>/store)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="evaluate the roster on test variations")
    p.add_argument("--store", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report directory (default: config output)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--hints")
    p.add_argument("--gap", type=float, default=1e-3)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write stats, enforced set and solution as JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("report", help="summarize per-variation test records")
    p.add_argument("--metrics", required=True, help="records.json written by 'test'")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="directory for the report files (default: stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SolveError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except (ValidationError, ParseError, StoreMismatchError, ModelError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
