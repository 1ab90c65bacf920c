"""Command-line entry point.

Subcommands:

* ``run``        execute a declarative experiment file (or a manifest) and
                 write trace CSVs, quantile CSVs, and a manifest
* ``reproduce``  run a named figure/experiment preset
* ``verify``     run a fixed-seed property suite and report pass/fail
* ``gen``        generate a quadratic task file or a synthetic LIBSVM dataset
* ``sweep``      tune the step size of each algorithm in an experiment file

Exit codes: 0 success, 1 validation/usage error, 2 every run diverged,
3 a verify suite failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from . import __version__
from .checks import run_suite
from .experiments import (
    SchemaError,
    build_problem,
    load_experiment_file,
    run_experiment,
    validate_experiment,
    _build_config,
)
from .harness import power_grid, sweep as sweep_gammas
from .presets import PRESET_NAMES, preset_experiments, preset_note
from .problems import generate_quadratic, make_blobs, save_quadratic_task, write_libsvm


def _parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_overrides(doc: dict, overrides) -> dict:
    for key, value in overrides:
        parts = key.split(".")
        target = doc
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise SchemaError(f"override path {key!r}: no section {part!r}")
            target = target[part]
        target[parts[-1]] = value
    return doc


def _print_summary(name: str, summary: dict) -> None:
    for algo, stats in summary.items():
        if algo.startswith("_"):
            continue
        print(
            f"  {name} {algo}: gamma={stats['gamma']:.6g} "
            f"median final |grad|={stats['final_grad_norm_median']:.6g} "
            f"median final gap={stats['final_obj_gap_median']:.6g} "
            f"diverged {stats['diverged_seeds']} seed(s)"
        )


def cmd_run(args) -> int:
    try:
        doc = load_experiment_file(args.experiment)
        _apply_overrides(doc, args.override or [])
        if args.seed is not None:
            doc["seeds"] = [args.seed]
        if args.metric_every is not None:
            doc["metric_every"] = args.metric_every
        exp = validate_experiment(doc)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out or exp.get("out") or "results"
    try:
        summary = run_experiment(exp, out_dir, workers=args.workers)
    except ValueError as exc:  # e.g. incompatible algorithm/compressor pair
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['_manifest']}")
    _print_summary(exp["name"], summary)
    return 2 if summary["_all_diverged"] else 0


def cmd_reproduce(args) -> int:
    try:
        exps = preset_experiments(args.figure, rounds=args.rounds)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    note = preset_note(args.figure)
    if note:
        print(f"note: {note}")
    out_dir = args.out or f"results/{args.figure}"
    all_diverged = True
    speedup_rows = []
    for exp in exps:
        if args.seed is not None:
            exp["seeds"] = [args.seed]
        if args.metric_every is not None:
            exp["metric_every"] = args.metric_every
        try:
            _apply_overrides(exp, args.override or [])
        except SchemaError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        path = os.path.join(out_dir, f"{exp['name']}__experiment.json")
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(exp, fh, indent=1)
            fh.write("\n")
        summary = run_experiment(exp, out_dir, workers=args.workers)
        _print_summary(exp["name"], summary)
        all_diverged = all_diverged and summary["_all_diverged"]
        if args.figure == "speedup":
            n = exp["problem"]["n"]
            for algo, stats in summary.items():
                if not algo.startswith("_"):
                    speedup_rows.append((algo, n, stats["final_grad_norm_median"]))
    if speedup_rows:
        print("median final gradient norm by node count:")
        for algo, n, val in sorted(speedup_rows):
            print(f"  {algo:12s} n={n:<3d} {val:.6g}")
    return 2 if all_diverged else 0


def cmd_verify(args) -> int:
    try:
        results = run_suite(args.suite, seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {args.suite}: {res.name} ({res.detail})")
        failed += 0 if res.passed else 1
    return 3 if failed else 0


def cmd_gen(args) -> int:
    try:
        if args.what == "quadratic":
            problem = generate_quadratic(args.n, args.d, args.lam, args.s, args.seed or 0, sigma=args.sigma)
            save_quadratic_task(problem, args.out_path)
        else:  # blobs
            x, y = make_blobs(args.classes, args.features, args.examples, args.seed or 0)
            write_libsvm(args.out_path, x, y)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out_path}")
    return 0


def cmd_sweep(args) -> int:
    try:
        doc = load_experiment_file(args.experiment)
        _apply_overrides(doc, args.override or [])
        exp = validate_experiment(doc)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    grid = power_grid(args.k_lo, args.k_hi)
    problem = build_problem(exp["problem"])
    rc = 0
    for algorithm in exp["algorithms"]:
        cfg = _build_config(exp, algorithm, problem)
        if args.seed is not None:
            cfg = replace(cfg, seeds=(args.seed,))
        try:
            result = sweep_gammas(cfg, grid, args.criterion)
        except RuntimeError as exc:
            print(f"{algorithm}: {exc}")
            rc = 2
            continue
        print(f"{algorithm}: best gamma = {result.best_gamma:.6g} ({args.criterion} = {result.best_score:.6g})")
        for row in result.table:
            mark = "diverged" if row["diverged"] else f"{row['score']:.6g}"
            print(f"    gamma=2^{int(round(math.log2(row['gamma']))):>4d} -> {mark}")
    return rc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="efsim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"efsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="replace the seed list with this single seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel worker processes")
    common.add_argument("--metric-every", type=int, default=None, help="metric logging cadence override")
    common.add_argument(
        "--override",
        action="append",
        type=_parse_override,
        metavar="KEY=VALUE",
        help="dotted-path experiment override, e.g. problem.sigma=0.01 (repeatable)",
    )

    p = sub.add_parser("run", parents=[common], help="run a declarative experiment file")
    p.add_argument("experiment", help="experiment JSON file (a manifest is accepted too)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce", parents=[common], help="run a named preset")
    p.add_argument("figure", choices=PRESET_NAMES)
    p.add_argument("--rounds", type=int, default=None, help="override the preset horizon")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("verify", help="run a fixed-seed property suite")
    p.add_argument("suite", choices=("compressors", "reductions", "theorem1", "lyapunov", "storm"))
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate a task file or synthetic dataset")
    gsub = p.add_subparsers(dest="what", required=True)
    gq = gsub.add_parser("quadratic")
    gq.add_argument("out_path")
    gq.add_argument("--n", type=int, required=True)
    gq.add_argument("--d", type=int, required=True)
    gq.add_argument("--lam", type=float, required=True)
    gq.add_argument("--s", type=float, required=True)
    gq.add_argument("--seed", type=int, default=0)
    gq.add_argument("--sigma", type=float, default=0.0)
    gq.set_defaults(func=cmd_gen)
    gb = gsub.add_parser("blobs")
    gb.add_argument("out_path")
    gb.add_argument("--classes", type=int, required=True)
    gb.add_argument("--features", type=int, required=True)
    gb.add_argument("--examples", type=int, required=True)
    gb.add_argument("--seed", type=int, default=0)
    gb.set_defaults(func=cmd_gen)

    p = sub.add_parser("sweep", parents=[common], help="step-size grid search for an experiment file")
    p.add_argument("experiment")
    p.add_argument("--k-lo", type=int, default=-20)
    p.add_argument("--k-hi", type=int, default=20)
    p.add_argument("--criterion", choices=("final_loss", "final_grad_norm"), default="final_loss")
    p.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
