"""Acceptance suite: one test per shipped guarantee, each printing a
[PASS]/[FAIL] line with the measured statistics.

Run with ``pytest tests/test_acceptance.py -v -s``.  The heavier checks
(the divergence study and the step-size-tuned quadratic comparison) take a
couple of minutes each; the whole module is a few minutes of CPU time.
"""

import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from efsim import optim
from efsim.compress import compress, densify, hard_threshold, identity, rand_k, top_k, verify_contractive
from efsim.core import StreamFactory, derive_stream, norm_sq
from efsim.experiments import run_experiment
from efsim.harness import RunConfig, power_grid, run, sweep, theorem1_check
from efsim.optim import HyperParams, theoretical_params
from efsim.problems import CounterexampleProblem, generate_quadratic


def report(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


# ---------------------------------------------------------------------------
# 1. lower bound for the idealized compressed method on the adversarial
#    two-dimensional instance
# ---------------------------------------------------------------------------


def test_01_lower_bound_on_counterexample():
    rep = theorem1_check(
        l_smooth=1.0, sigma=1.0, gamma=1e-3, n=1, variance_batch=1, rounds=10_000, seeds=range(50), x0=(0.0, -0.01)
    )
    ok = rep.lhs - 3.0 * rep.stderr >= rep.rhs
    assert report(
        "lower bound",
        ok,
        f"mean |grad|^2 = {rep.lhs:.4e} (stderr {rep.stderr:.2e}) >= {rep.rhs:.4e} with "
        f"{rep.margin_se:.0f} standard errors of margin",
    )


# ---------------------------------------------------------------------------
# 2./3. divergence of the compressed stochastic method, stability of its
#       momentum variant, and the node-count sweep
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def divergence_medians():
    """Median final gradient norms, 10 seeds, T = 1e4, gamma = eta = 1e-3."""
    hp = HyperParams(gamma=1e-3, eta=1e-3, batch=1, b_init=1, rounds=10_000)
    out = {}
    for algo, eta in (("ef21_sgd", 1.0), ("ef21_sgdm", 1e-3)):
        for n in (1, 4, 16):
            prob = CounterexampleProblem(l_smooth=1.0, sigma=1.0, variance_batch=1, n_nodes=n, x0=(0.0, -0.01))
            cfg = RunConfig(
                algorithm=algo,
                problem=prob,
                compressor=top_k(1, 2),
                hyper=replace(hp, eta=eta),
                seeds=tuple(range(10)),
                metric_every=10_000,
            )
            out[(algo, n)] = float(np.median([run(cfg, s).final.grad_norm for s in cfg.seeds]))
    return out


def test_02_divergence_vs_momentum_stability(divergence_medians):
    grad0 = 0.01
    med_sgd = divergence_medians[("ef21_sgd", 1)]
    med_sgdm = divergence_medians[("ef21_sgdm", 1)]
    ok_sgd = med_sgd >= grad0
    ok_sgdm = med_sgdm <= 0.5 * grad0
    report("no convergence without momentum", ok_sgd, f"median final |grad| = {med_sgd:.4f} >= {grad0}")
    report(
        "momentum variant stays below half the start",
        ok_sgdm,
        f"median final |grad| = {med_sgdm:.4f} vs threshold {0.5 * grad0}",
    )
    assert ok_sgd, f"compressed stochastic method converged unexpectedly: {med_sgd:.4f} < {grad0}"
    assert ok_sgdm, (
        f"momentum-variant median final gradient norm {med_sgdm:.4f} exceeds 0.5*|grad(x0)| = {0.5 * grad0}; "
        "the stationary fluctuation of the momentum estimator at gamma=eta=1e-3, sigma=1 is ~1.4e-2 "
        "(matches the closed-form AR(1) variance), so this threshold is not reachable at this horizon"
    )


def test_03_node_scaling(divergence_medians):
    sgd = {n: divergence_medians[("ef21_sgd", n)] for n in (1, 4, 16)}
    sgdm = {n: divergence_medians[("ef21_sgdm", n)] for n in (1, 4, 16)}
    ok_sgd = sgd[16] >= sgd[1] / 1.5
    ok_sgdm = sgdm[1] >= sgdm[4] >= sgdm[16]
    report(
        "no node-count improvement without momentum",
        ok_sgd,
        f"medians n=1/4/16: {sgd[1]:.4f}/{sgd[4]:.4f}/{sgd[16]:.4f} (allowed improvement 1.5x)",
    )
    report(
        "momentum variant improves monotonically with nodes",
        ok_sgdm,
        f"medians n=1/4/16: {sgdm[1]:.4f}/{sgdm[4]:.4f}/{sgdm[16]:.4f}",
    )
    assert ok_sgdm, f"momentum medians not monotone: {sgdm}"
    assert ok_sgd, (
        f"baseline improved {sgd[1] / sgd[16]:.2f}x from n=1 to n=16 (allowed 1.5x); its floor has an "
        "n-independent compression-bias part plus a variance part that node-averaging does shrink, so with "
        "independent per-node noise the measured improvement exceeds the allowance"
    )


# ---------------------------------------------------------------------------
# 4. reduction identities (bitwise) and the error-feedback virtual iterate
# ---------------------------------------------------------------------------


def _trajectory(kind, problem, comp, hp, seed, rounds):
    streams = StreamFactory(seed)
    server, nodes, _ = optim.init(kind, problem, hp, comp, streams)
    xs = [server.x.copy()]
    for _ in range(rounds):
        optim.run_round(kind, server, nodes, problem, hp, comp, streams)
        xs.append(server.x.copy())
    return np.array(xs)


def test_04_reduction_identities():
    rounds = 100
    prob = generate_quadratic(4, 20, 0.1, 1.0, seed=3, sigma=0.1)
    comp = top_k(3, 20)
    hp = HyperParams(gamma=0.05, eta=1.0, batch=2, b_init=2, rounds=rounds)
    checks = []
    for name, a, b, c in [
        ("momentum=1 equals no-momentum", "ef21_sgdm", "ef21_sgd", comp),
        ("double momentum=1 equals no-momentum", "ef21_sgd2m", "ef21_sgd", comp),
        ("uncompressed momentum=1 equals sgd", "sgdm", "sgd", identity(20)),
    ]:
        same = np.array_equal(_trajectory(a, prob, c, hp, 1, rounds), _trajectory(b, prob, c, hp, 1, rounds))
        checks.append(report(name, same, "bitwise over 100 rounds"))

    prob0 = generate_quadratic(4, 20, 0.1, 1.0, seed=3, sigma=0.0)
    hp0 = HyperParams(gamma=0.05, eta=1.0, batch=1, b_init=1, rounds=rounds)
    ref = _trajectory("sgd", prob0, identity(20), hp0, 1, rounds)
    collapse = all(
        np.array_equal(ref, _trajectory(kind, prob0, identity(20), replace(hp0, eta=eta), 1, rounds))
        for kind, eta in (("ef21_sgdm", 1.0), ("ef21_sgd", 1.0), ("ef21_storm", 0.5))
    )
    checks.append(report("noiseless identity collapse to one trajectory", collapse, "4 methods bitwise"))

    # plain error feedback: virtual iterate follows the uncompressed recursion
    streams = StreamFactory(8)
    hp14 = HyperParams(gamma=0.05, rounds=rounds)
    server, nodes, _ = optim.init("ef14_sgd", prob, hp14, comp, streams)
    worst = 0.0
    for _ in range(rounds):
        cached = np.mean([n.sg_prev for n in nodes], axis=0)
        xtil = server.x - np.mean([n.e for n in nodes], axis=0)
        optim.run_round("ef14_sgd", server, nodes, prob, hp14, comp, streams)
        xtil_new = server.x - np.mean([n.e for n in nodes], axis=0)
        rel = np.linalg.norm(xtil_new - (xtil - hp14.gamma * cached)) / (1.0 + np.linalg.norm(xtil_new))
        worst = max(worst, rel)
    checks.append(report("virtual-iterate identity", worst <= 1e-10, f"worst relative error {worst:.2e}"))
    assert all(checks)


# ---------------------------------------------------------------------------
# 5. compression operator guarantees
# ---------------------------------------------------------------------------


def test_05_compressor_definitions():
    rng = derive_stream(0, 0, 0)
    rep = verify_contractive(top_k(10, 100), trials=10_000, rng=rng)
    ok_top = rep.max_ratio <= 0.9
    report("topk worst-case ratio", ok_top, f"max over 1e4 draws = {rep.max_ratio:.4f} <= 0.9, zero violations")

    rep_rand = verify_contractive(rand_k(10, 100), trials=1000, rng=rng)
    ok_rand = abs(rep_rand.mean_ratio - 0.9) <= 0.01
    report("randk mean ratio", ok_rand, f"mean = {rep_rand.mean_ratio:.4f} in 0.9 +- 0.01")

    spec = hard_threshold(0.1, 100)
    delta_sq = 100 * 0.1**2
    worst = 0.0
    for _ in range(10_000):
        x = rng.standard_normal(100) * rng.uniform(0.02, 0.2)
        worst = max(worst, norm_sq(x - densify(compress(spec, x))))
    ok_abs = worst <= delta_sq
    report("hard-threshold error bound", ok_abs, f"worst error {worst:.4f} <= Delta^2 = {delta_sq}")
    assert ok_top and ok_rand and ok_abs


# ---------------------------------------------------------------------------
# 6. descent diagnostic on generated quadratics
# ---------------------------------------------------------------------------


def test_06_descent_diagnostic():
    comp = top_k(5, 100)
    alpha = 0.05
    rounds = 1000

    prob0 = generate_quadratic(20, 100, 0.01, 1.0, seed=0, sigma=0.0)
    sm0 = prob0.smoothness()
    delta0 = prob0.value(prob0.x0) - sm0.f_star
    hp0 = theoretical_params("ef21_sgdm", sm0, alpha, 0.0, 20, rounds, delta0)
    cfg0 = RunConfig("ef21_sgdm", prob0, comp, hp0, seeds=(0,), metric_every=10, lyapunov=True, lyapunov_every=10)
    lam = run(cfg0, 0).column("lyapunov")
    lam = lam[~np.isnan(lam)]
    increases = int(np.sum(np.diff(lam) > 0))
    ok_det = increases == 0
    report("noiseless descent", ok_det, f"{increases} increases over {len(lam)} logged values")

    probs = generate_quadratic(20, 100, 0.01, 1.0, seed=0, sigma=0.01)
    sms = probs.smoothness()
    hps = theoretical_params("ef21_sgdm", sms, alpha, 0.01, 20, rounds, prob0.value(prob0.x0) - sms.f_star)
    cfgs = RunConfig(
        "ef21_sgdm", probs, comp, hps, seeds=tuple(range(20)), metric_every=10, lyapunov=True, lyapunov_every=10
    )
    lams = np.stack([run(cfgs, s).column("lyapunov") for s in cfgs.seeds])
    avg = np.nanmean(lams, axis=0)
    avg = avg[~np.isnan(avg)]
    frac_up = float(np.mean(np.diff(avg) > 0))
    ok_st = frac_up <= 0.05 and avg[-1] < avg[0]
    report(
        "stochastic descent (20-seed average)",
        ok_st,
        f"{100 * frac_up:.1f}% upward pairs (<= 5%), start {avg[0]:.4f} -> end {avg[-1]:.4f}",
    )
    assert ok_det and ok_st


# ---------------------------------------------------------------------------
# 7. heterogeneous quadratic: tuned step sizes, momentum variant's floor vs
#    plain error feedback at equal transmitted coordinates
# ---------------------------------------------------------------------------


def test_07_quadratic_method_ordering():
    prob = generate_quadratic(20, 100, 0.01, 1.0, seed=0, sigma=0.01)
    rounds = 8000  # both methods send 5 coords/node/round, so equal rounds = equal coordinates
    floors = {}
    gammas = {}
    for algo, eta in (("ef14_sgd", 1.0), ("ef21_sgdm", 0.1)):
        hp = HyperParams(gamma=1.0, eta=eta, batch=1, b_init=1, rounds=rounds)
        cfg = RunConfig(algo, prob, top_k(5, 100), hp, seeds=(0,), metric_every=rounds)
        res = sweep(cfg, power_grid(-8, 0), "final_loss")
        best = replace(res.best_config, seeds=(0, 1, 2))
        floors[algo] = float(np.median([run(best, s).final.obj_gap for s in best.seeds]))
        gammas[algo] = res.best_gamma
    ratio = floors["ef21_sgdm"] / floors["ef14_sgd"]
    ok = floors["ef21_sgdm"] <= 0.5 * floors["ef14_sgd"]
    report(
        "momentum floor at most half the error-feedback floor",
        ok,
        f"floors: momentum {floors['ef21_sgdm']:.3e} (gamma {gammas['ef21_sgdm']:.3g}) vs "
        f"error feedback {floors['ef14_sgd']:.3e} (gamma {gammas['ef14_sgd']:.3g}), ratio {ratio:.2f}",
    )
    assert ok, (
        f"floor ratio {ratio:.2f} > 0.5: at this scale (top-5 of d=100, sigma=0.01) both tuned methods hit a "
        "common compression-noise floor; the ordering does emerge at sigma=0.001 (ratio ~0.2) or with top-1 "
        "(ratio ~0.1), matching the published behavior at its original scale"
    )


# ---------------------------------------------------------------------------
# 8. time-varying momentum satisfies its weighted gradient bound
# ---------------------------------------------------------------------------


def test_08_time_varying_momentum_bound():
    prob = generate_quadratic(1, 20, 0.1, 0.0, seed=0, sigma=0.1)
    sm = prob.smoothness()
    delta0 = prob.value(prob.x0) - sm.f_star
    gamma0 = 1.0 / (3.0 * sm.L)
    rounds = 1000
    hp = HyperParams(gamma=gamma0, eta=1.0, batch=1, b_init=1, rounds=rounds, schedule="inv_sqrt_t")
    cfg = RunConfig("sgdm", prob, identity(20), hp, seeds=tuple(range(20)), metric_every=1)
    etas = 1.0 / np.sqrt(np.arange(rounds) + 1.0)
    mean_gsq = np.stack([run(cfg, s).column("grad_norm")[:rounds] ** 2 for s in cfg.seeds]).mean(axis=0)
    weighted = float((etas * mean_gsq).sum() / etas.sum())
    lam0 = delta0 + gamma0 * prob.sigma**2 / hp.b_init
    bound = (2.0 * lam0 / gamma0 + 2.0 * prob.sigma**2 * float((etas**2).sum())) / float(etas.sum())
    ok = weighted <= 1.5 * bound
    assert report(
        "weighted gradient bound", ok, f"weighted mean |grad|^2 = {weighted:.4f} <= 1.5 x bound ({bound:.4f})"
    )


# ---------------------------------------------------------------------------
# 9. one-step conditional mean of the variance-reduced estimator
# ---------------------------------------------------------------------------


def test_09_estimator_conditional_mean():
    prob = generate_quadratic(1, 5, 0.1, 0.0, seed=2, sigma=0.5)
    rng = derive_stream(0, 0, 99)
    x_old = rng.standard_normal(5)
    x_new = x_old - 0.1 * rng.standard_normal(5)
    w_old = prob.full_grad(0, x_old) + 0.3 * rng.standard_normal(5)
    eta = 0.3
    draws = 10_000
    samples = np.empty((draws, 5))
    for j in range(draws):
        sg_new, sg_old = prob.stoch_grad_pair(0, x_new, x_old, derive_stream(1, 0, j))
        samples[j] = sg_new + (1.0 - eta) * (w_old - sg_old)
    expected = prob.full_grad(0, x_new) + (1.0 - eta) * (w_old - prob.full_grad(0, x_old))
    se = samples.std(axis=0, ddof=1) / math.sqrt(draws)
    dev_over_se = float(np.max(np.abs(samples.mean(axis=0) - expected) / se))
    ok = dev_over_se <= 4.0
    assert report("estimator conditional mean", ok, f"max per-coordinate deviation {dev_over_se:.2f} SE (<= 4)")


# ---------------------------------------------------------------------------
# 10. bitwise reproduction from manifests
# ---------------------------------------------------------------------------


def test_10_bitwise_reproduction(tmp_path):
    exps = [
        {
            "name": "divergence_n1",
            "problem": {"kind": "counterexample", "sigma": 1.0, "variance_batch": 1, "n": 1, "x0": [0.0, -0.01]},
            "algorithms": ["ef21_sgd", "ef21_sgdm"],
            "compressor": {"kind": "topk", "k": 1},
            "hyper": {"gamma": 1e-3, "eta": 1e-3, "rounds": 10_000},
            "seeds": [0, 1],
            "metric_every": 1000,
        },
        {
            "name": "quad_descent",
            "problem": {"kind": "quadratic", "n": 20, "d": 100, "lam": 0.01, "s": 1.0, "seed": 0, "sigma": 0.01},
            "algorithms": ["ef21_sgdm"],
            "compressor": {"kind": "topk", "k": 5},
            "hyper": {"theoretical": True, "rounds": 1000},
            "seeds": [0, 1],
            "metric_every": 10,
            "lyapunov": True,
            "lyapunov_every": 10,
        },
    ]
    ok_all = True
    for exp in exps:
        out1 = str(tmp_path / f"{exp['name']}_a")
        out2 = str(tmp_path / f"{exp['name']}_b")
        run_experiment(json.loads(json.dumps(exp)), out1, workers=1)
        manifest = json.load(open(os.path.join(out1, f"{exp['name']}__manifest.json")))
        run_experiment(manifest["experiment"], out2, workers=1)
        same = True
        n_files = 0
        for name in sorted(os.listdir(out1)):
            if name.endswith(".csv"):
                n_files += 1
                same &= open(os.path.join(out1, name), "rb").read() == open(os.path.join(out2, name), "rb").read()
        ok_all &= report(f"bitwise reproduction ({exp['name']})", same, f"{n_files} CSV files byte-identical")
    assert ok_all
