"""Declarative experiment files: schema validation, problem construction,
execution, and manifest emission.

An experiment is a JSON document; unknown keys anywhere are hard errors so
a typo cannot silently fall back to a default.  The emitted manifest embeds
the fully resolved experiment (defaults filled in), which makes every run
reconstructible: feeding a manifest back to ``run`` reproduces all CSVs
bitwise.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__, optim
from .compress import Compressor, absolute_delta, contraction_alpha, hard_threshold, identity, rand_k, top_k
from .harness import (
    RunConfig,
    RunTrace,
    power_grid,
    run,
    run_quantiles,
    sweep,
    trace_diverged,
    write_quantiles_csv,
    write_trace_csv,
)
from .optim import HyperParams, theoretical_params
from .problems import (
    CounterexampleProblem,
    LogRegProblem,
    Problem,
    generate_quadratic,
    load_libsvm_problem,
    load_quadratic_task,
    make_blobs,
    split_examples,
)

__all__ = [
    "SchemaError",
    "validate_experiment",
    "build_problem",
    "build_compressor",
    "resolve_hyper",
    "run_experiment",
    "load_experiment_file",
]

MANIFEST_FORMAT = "efsim-manifest"


class SchemaError(ValueError):
    pass


def _check_keys(doc: dict, allowed: dict, where: str) -> dict:
    """Return doc merged over defaults; unknown or missing keys are errors.

    ``allowed`` maps key -> default, with the sentinel ``...`` marking a
    required key.
    """
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected a mapping, got {type(doc).__name__}")
    for key in doc:
        if key not in allowed:
            raise SchemaError(f"{where}: unknown key {key!r}")
    out = {}
    for key, default in allowed.items():
        if key in doc:
            out[key] = doc[key]
        elif default is ...:
            raise SchemaError(f"{where}: missing required key {key!r}")
        else:
            out[key] = default
    return out


_PROBLEM_SCHEMAS = {
    "counterexample": {
        "kind": ...,
        "l_smooth": 1.0,
        "sigma": 1.0,
        "variance_batch": 1,
        "n": 1,
        "x0": [0.0, -0.01],
    },
    "quadratic": {"kind": ..., "n": ..., "d": ..., "lam": ..., "s": ..., "seed": 0, "sigma": 0.0},
    "quadratic_file": {"kind": ..., "path": ..., "sigma": None},
    "logreg_file": {
        "kind": ...,
        "path": ...,
        "classes": ...,
        "features": ...,
        "n": ...,
        "split": "by_label",
        "split_seed": 0,
        "reg": 1e-3,
    },
    "blobs": {
        "kind": ...,
        "classes": ...,
        "features": ...,
        "examples": ...,
        "n": ...,
        "seed": 0,
        "split": "by_label",
        "split_seed": 0,
        "reg": 1e-3,
    },
}

_COMPRESSOR_SCHEMA = {"kind": ..., "k": None, "tau": None}

_HYPER_SCHEMA = {
    "gamma": None,
    "eta": 1.0,
    "batch": 1,
    "b_init": 1,
    "rounds": ...,
    "schedule": "constant",
    "theoretical": False,
}

_TUNE_SCHEMA = {"k_lo": ..., "k_hi": ..., "criterion": "final_loss", "seeds": None}

_EXPERIMENT_SCHEMA = {
    "name": ...,
    "problem": ...,
    "algorithms": ...,
    "compressor": ...,
    "hyper": ...,
    "seeds": ...,
    "metric_every": 1,
    "lyapunov": False,
    "lyapunov_every": 10,
    "tune": None,
    "out": None,
}


def validate_experiment(doc: dict) -> dict:
    """Validate and normalize an experiment document (defaults filled)."""
    exp = _check_keys(doc, _EXPERIMENT_SCHEMA, "experiment")
    prob = exp["problem"]
    if not isinstance(prob, dict) or "kind" not in prob:
        raise SchemaError("experiment.problem: needs a 'kind' key")
    kind = prob["kind"]
    if kind not in _PROBLEM_SCHEMAS:
        raise SchemaError(f"experiment.problem: unknown kind {kind!r}")
    exp["problem"] = _check_keys(prob, _PROBLEM_SCHEMAS[kind], f"experiment.problem({kind})")
    exp["compressor"] = _check_keys(exp["compressor"], _COMPRESSOR_SCHEMA, "experiment.compressor")
    exp["hyper"] = _check_keys(exp["hyper"], _HYPER_SCHEMA, "experiment.hyper")
    if exp["tune"] is not None:
        exp["tune"] = _check_keys(exp["tune"], _TUNE_SCHEMA, "experiment.tune")
        if exp["hyper"]["theoretical"]:
            raise SchemaError("experiment: 'tune' and hyper.theoretical are mutually exclusive")
    if exp["hyper"]["gamma"] is None and not exp["hyper"]["theoretical"] and exp["tune"] is None:
        raise SchemaError("experiment.hyper: gamma is required unless theoretical or tune is set")
    algos = exp["algorithms"]
    if not isinstance(algos, list) or not algos:
        raise SchemaError("experiment.algorithms: need a nonempty list")
    for a in algos:
        if a not in optim.ALGORITHMS:
            raise SchemaError(f"experiment.algorithms: unknown algorithm {a!r}")
    if not isinstance(exp["seeds"], list) or not exp["seeds"]:
        raise SchemaError("experiment.seeds: need a nonempty list")
    return exp


def build_problem(spec: dict) -> Problem:
    kind = spec["kind"]
    if kind == "counterexample":
        return CounterexampleProblem(
            l_smooth=spec["l_smooth"],
            sigma=spec["sigma"],
            variance_batch=spec["variance_batch"],
            n_nodes=spec["n"],
            x0=spec["x0"],
        )
    if kind == "quadratic":
        return generate_quadratic(spec["n"], spec["d"], spec["lam"], spec["s"], spec["seed"], sigma=spec["sigma"])
    if kind == "quadratic_file":
        return load_quadratic_task(spec["path"], sigma=spec["sigma"])
    if kind == "logreg_file":
        return load_libsvm_problem(
            spec["path"], spec["classes"], spec["features"], spec["n"], spec["split"], spec["split_seed"], spec["reg"]
        )
    if kind == "blobs":
        x, y = make_blobs(spec["classes"], spec["features"], spec["examples"], spec["seed"])
        feats, labs = split_examples(x, y, spec["n"], spec["split"], spec["split_seed"])
        return LogRegProblem(feats, labs, spec["classes"], reg=spec["reg"])
    raise SchemaError(f"unknown problem kind {kind!r}")


def build_compressor(spec: dict, dim: int) -> Compressor:
    kind = spec["kind"]
    if kind == "topk":
        return top_k(int(spec["k"]), dim)
    if kind == "randk":
        return rand_k(int(spec["k"]), dim)
    if kind == "identity":
        return identity(dim)
    if kind == "hard_threshold":
        return hard_threshold(float(spec["tau"]), dim)
    raise SchemaError(f"unknown compressor kind {kind!r}")


def resolve_hyper(exp: dict, algorithm: str, problem: Problem, comp: Compressor) -> HyperParams:
    """Concrete hyperparameters for one algorithm of the experiment."""
    h = exp["hyper"]
    if h["theoretical"]:
        smooth = problem.smoothness()
        if smooth.f_star is None:
            raise SchemaError("theoretical step sizes need a problem with a known optimal value")
        delta0 = problem.value(problem.x0) - smooth.f_star
        return theoretical_params(
            algorithm,
            smooth,
            contraction_alpha(comp),
            problem.sigma,
            problem.n_nodes,
            h["rounds"],
            delta0,
            delta_abs=absolute_delta(comp),
            batch=h["batch"],
        )
    return HyperParams(
        gamma=h["gamma"] if h["gamma"] is not None else 1.0,
        rounds=h["rounds"],
        eta=h["eta"],
        batch=h["batch"],
        b_init=h["b_init"],
        schedule=h["schedule"],
    )


def _build_config(exp: dict, algorithm: str, problem: Problem | None = None) -> RunConfig:
    if problem is None:
        problem = build_problem(exp["problem"])
    comp = build_compressor(exp["compressor"], problem.dim)
    hyper = resolve_hyper(exp, algorithm, problem, comp)
    return RunConfig(
        algorithm=algorithm,
        problem=problem,
        compressor=comp,
        hyper=hyper,
        seeds=tuple(exp["seeds"]),
        metric_every=exp["metric_every"],
        lyapunov=exp["lyapunov"],
        lyapunov_every=exp["lyapunov_every"],
    )


def _tune_gamma(exp: dict, algorithm: str, problem: Problem) -> float:
    tune = exp["tune"]
    cfg = _build_config(exp, algorithm, problem)
    if tune["seeds"]:
        cfg = replace(cfg, seeds=tuple(tune["seeds"]), lyapunov=False)
    result = sweep(cfg, power_grid(tune["k_lo"], tune["k_hi"]), tune["criterion"])
    return result.best_gamma


def _run_task(exp: dict, algorithm: str, seed: int, gamma: float | None) -> RunTrace:
    """Worker entry: rebuild everything from the declarative spec."""
    problem = build_problem(exp["problem"])
    cfg = _build_config(exp, algorithm, problem)
    if gamma is not None:
        cfg = replace(cfg, hyper=replace(cfg.hyper, gamma=gamma))
    return run(cfg, seed)


def run_experiment(exp: dict, out_dir: str, workers: int = 1) -> dict:
    """Execute every (algorithm, seed) pair, write traces, quantiles, and a
    manifest; return a summary keyed by algorithm."""
    exp = validate_experiment(exp)
    os.makedirs(out_dir, exist_ok=True)
    problem = build_problem(exp["problem"])

    tuned: dict[str, float | None] = {}
    resolved_hyper: dict[str, dict] = {}
    for algorithm in exp["algorithms"]:
        tuned[algorithm] = _tune_gamma(exp, algorithm, problem) if exp["tune"] is not None else None
        cfg = _build_config(exp, algorithm, problem)
        gamma = tuned[algorithm] if tuned[algorithm] is not None else cfg.hyper.gamma
        resolved_hyper[algorithm] = {
            "gamma": gamma,
            "eta": cfg.hyper.eta,
            "batch": cfg.hyper.batch,
            "b_init": cfg.hyper.b_init,
            "rounds": cfg.hyper.rounds,
            "schedule": cfg.hyper.schedule,
        }

    tasks = [(algorithm, seed) for algorithm in exp["algorithms"] for seed in exp["seeds"]]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {(a, s): pool.submit(_run_task, exp, a, s, tuned[a]) for a, s in tasks}
            traces = {key: fut.result() for key, fut in futures.items()}
    else:
        traces = {}
        for algorithm, seed in tasks:
            traces[(algorithm, seed)] = _run_task(exp, algorithm, seed, tuned[algorithm])

    outputs = []
    summary = {}
    name = exp["name"]
    for algorithm in exp["algorithms"]:
        algo_traces = [traces[(algorithm, s)] for s in exp["seeds"]]
        for tr in algo_traces:
            fname = f"{name}__{algorithm}__seed{tr.seed}.csv"
            write_trace_csv(os.path.join(out_dir, fname), tr)
            outputs.append(fname)
        cfg = _build_config(exp, algorithm, problem)
        qt = run_quantiles(cfg, traces=algo_traces)
        qname = f"{name}__{algorithm}__quantiles.csv"
        write_quantiles_csv(os.path.join(out_dir, qname), qt)
        outputs.append(qname)
        ok = [tr for tr in algo_traces if not trace_diverged(tr)]
        summary[algorithm] = {
            "diverged_seeds": len(algo_traces) - len(ok),
            "final_grad_norm_median": float(np.median([tr.final.grad_norm for tr in ok])) if ok else math.inf,
            "final_obj_gap_median": float(np.median([tr.final.obj_gap for tr in ok])) if ok else math.inf,
            "gamma": resolved_hyper[algorithm]["gamma"],
        }

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "package": {"name": "efsim", "version": __version__},
        "experiment": exp,
        "resolved_hyper": resolved_hyper,
        "outputs": outputs,
    }
    mpath = os.path.join(out_dir, f"{name}__manifest.json")
    tmp = mpath + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, mpath)
    summary["_manifest"] = mpath
    summary["_all_diverged"] = all(
        summary[a]["diverged_seeds"] == len(exp["seeds"]) for a in exp["algorithms"]
    )
    return summary


def load_experiment_file(path: str) -> dict:
    """Read an experiment file; manifests are accepted and unwrapped."""
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and doc.get("format") == MANIFEST_FORMAT:
        if "experiment" not in doc:
            raise SchemaError(f"{path}: manifest has no 'experiment' section")
        doc = doc["experiment"]
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return doc
