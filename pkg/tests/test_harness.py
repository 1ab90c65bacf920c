import math
from dataclasses import replace

import numpy as np
import pytest

from efsim.compress import identity, top_k
from efsim.harness import (
    RunConfig,
    lyapunov,
    power_grid,
    read_trace_csv,
    run,
    run_quantiles,
    sweep,
    theorem1_check,
    trace_diverged,
    write_quantiles_csv,
    write_trace_csv,
)
from efsim.optim import HyperParams, NodeState, ServerState
from efsim.problems import CounterexampleProblem, QuadraticProblem, generate_quadratic


def quad_config(sigma=0.1, rounds=50, **kw):
    prob = generate_quadratic(4, 20, 0.1, 1.0, seed=3, sigma=sigma)
    hp = HyperParams(gamma=0.05, eta=0.5, rounds=rounds)
    defaults = dict(algorithm="ef21_sgdm", problem=prob, compressor=top_k(3, 20), hyper=hp, seeds=(0,))
    defaults.update(kw)
    return RunConfig(**defaults)


def test_zero_rounds_gives_single_row():
    cfg = quad_config(rounds=0)
    tr = run(cfg, 0)
    assert len(tr.records) == 1
    assert tr.records[0].t == 0
    assert tr.records[0].samples_cum == cfg.hyper.b_init


def test_rerun_is_bitwise_identical():
    cfg = quad_config(rounds=60, metric_every=7)
    a = run(cfg, 5)
    b = run(cfg, 5)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert (ra.t, ra.coords_cum, ra.samples_cum) == (rb.t, rb.coords_cum, rb.samples_cum)
        assert ra.grad_norm == rb.grad_norm and ra.obj_gap == rb.obj_gap


def test_metric_cadence_does_not_perturb_trajectory():
    dense = run(quad_config(rounds=40, metric_every=1), 2)
    sparse = run(quad_config(rounds=40, metric_every=10), 2)
    sparse_rows = {r.t: r for r in sparse.records}
    for t, row in sparse_rows.items():
        match = [r for r in dense.records if r.t == t][0]
        assert match.grad_norm == row.grad_norm
        assert match.obj_gap == row.obj_gap
        assert match.coords_cum == row.coords_cum


def test_final_round_always_logged():
    tr = run(quad_config(rounds=47, metric_every=10), 0)
    assert tr.records[-1].t == 47


def test_cumulative_columns_nondecreasing():
    tr = run(quad_config(rounds=30, metric_every=3), 1)
    coords = tr.column("coords_cum")
    samples = tr.column("samples_cum")
    assert np.all(np.diff(coords) >= 0)
    assert np.all(np.diff(samples) >= 0)
    # EF21 family with TopK: n*k per round exactly
    assert coords[-1] == 4 * 3 * 30


def test_divergent_run_truncates_with_round():
    cfg = quad_config(rounds=200)
    cfg = replace(cfg, hyper=replace(cfg.hyper, gamma=1e9))
    tr = run(cfg, 0)
    assert tr.failure_round is not None
    assert trace_diverged(tr)


def test_quantiles_single_seed_equal_bands():
    cfg = quad_config(rounds=20, metric_every=5)
    qt = run_quantiles(cfg)
    for name in ("grad_norm", "obj_gap"):
        assert np.array_equal(qt.q25[name], qt.median[name])
        assert np.array_equal(qt.median[name], qt.q75[name])


def test_quantiles_identical_seeds_zero_iqr():
    cfg = quad_config(rounds=20, metric_every=5, seeds=(3,) * 10)
    qt = run_quantiles(cfg)
    assert np.all(qt.q75["grad_norm"] - qt.q25["grad_norm"] == 0.0)


def test_quantiles_median_is_pointwise():
    cfg = quad_config(rounds=10, metric_every=10, seeds=(0, 1, 2, 3, 4))
    qt = run_quantiles(cfg)
    finals = sorted(tr.final.grad_norm for tr in qt.traces)
    assert qt.median["grad_norm"][-1] == pytest.approx(np.median(finals), rel=1e-15)


# -- descent diagnostic ---------------------------------------------------------


def test_lyapunov_hand_computed_value():
    # one node, one dimension, f(x) = x^2/2, x=1, g=v=0.5, gamma=eta=alpha=1:
    # 0.5 + 0 + 0.25 + 0.25 = 1.0
    prob = QuadraticProblem.from_matrices(np.ones((1, 1, 1)), np.zeros((1, 1)), x0=np.zeros(1))
    server = ServerState(x=np.array([1.0]), g=np.array([0.5]), t=0)
    nodes = [NodeState(g=np.array([0.5]), v=np.array([0.5]))]
    val = lyapunov(prob, server, nodes, gamma=1.0, eta=1.0, alpha=1.0)
    assert val == pytest.approx(1.0, rel=1e-12)


def test_lyapunov_noiseless_exact_init_equals_gap():
    prob = generate_quadratic(3, 10, 0.1, 1.0, seed=4, sigma=0.0)
    from efsim import optim
    from efsim.core import StreamFactory

    hp = HyperParams(gamma=0.01, eta=0.5, rounds=1, b_init=1)
    server, nodes, _ = optim.init("ef21_sgdm", prob, hp, top_k(2, 10), StreamFactory(0))
    delta0 = prob.value(prob.x0) - prob.f_star
    val = lyapunov(prob, server, nodes, gamma=0.01, eta=0.5, alpha=0.2)
    assert val == pytest.approx(delta0, rel=1e-12)


def test_lyapunov_requires_momentum_state():
    prob = generate_quadratic(2, 10, 0.1, 1.0, seed=4)
    with pytest.raises(ValueError):
        RunConfig(
            algorithm="ef21_sgd",
            problem=prob,
            compressor=top_k(2, 10),
            hyper=HyperParams(gamma=0.01, rounds=2),
            lyapunov=True,
        )
    from efsim.compress import hard_threshold

    with pytest.raises(ValueError, match="contractive"):
        RunConfig(
            algorithm="ef21_sgdm_abs",
            problem=prob,
            compressor=hard_threshold(0.1, 10),
            hyper=HyperParams(gamma=0.01, rounds=2),
            lyapunov=True,
        )
    server = ServerState(x=prob.x0.copy(), g=np.zeros(10), t=0)
    nodes = [NodeState(g=np.zeros(10)) for _ in range(2)]
    with pytest.raises(ValueError):
        lyapunov(prob, server, nodes, 0.01, 0.5, 0.2)


def test_lyapunov_logged_at_own_cadence():
    cfg = quad_config(rounds=40, metric_every=5, lyapunov=True, lyapunov_every=10)
    tr = run(cfg, 0)
    for rec in tr.records:
        if rec.t % 10 == 0 or rec.t == 40:
            assert rec.lyapunov is not None
        else:
            assert rec.lyapunov is None


# -- lower-bound check ------------------------------------------------------------


def test_theorem1_report_values():
    rep = theorem1_check(1.0, 1.0, 1e-3, 1, 1, rounds=200, seeds=range(8))
    assert rep.rhs == pytest.approx(1e-4 / 60.0, rel=1e-12)
    assert rep.lhs > 0

    rep = theorem1_check(1.0, 1.0, 1e-3, 2, 30, rounds=100, seeds=range(4))
    assert rep.rhs == pytest.approx(min(1.0 / 30, 1e-4) / 60.0, rel=1e-12)


def test_theorem1_noiseless_trivially_passes():
    rep = theorem1_check(1.0, 0.0, 1e-3, 1, 1, rounds=100, seeds=range(3))
    assert rep.rhs == 0.0
    assert rep.passed


def test_theorem1_validates_arguments():
    with pytest.raises(ValueError):
        theorem1_check(1.0, 1.0, 2.0, 1, 1, rounds=10, seeds=[0])  # gamma > 1/L
    with pytest.raises(ValueError):
        theorem1_check(1.0, 1.0, 0.5, 1, 1, rounds=10, seeds=[0], x0=(0.0, 0.5))


def test_theorem1_batch_boundary():
    # with B >= sigma^2/(60 eps^2), the bound stops forbidding eps-accuracy
    sigma, eps = 1.0, 0.05
    b_crit = math.ceil(sigma**2 / (60 * eps**2))
    rep = theorem1_check(1.0, sigma, 1e-3, 1, b_crit, rounds=50, seeds=range(3), x0=(0.0, -1.0))
    assert rep.rhs <= eps**2 + 1e-12


# -- sweep ------------------------------------------------------------------------


def test_power_grid():
    grid = power_grid(-2, 1)
    assert grid == [0.25, 0.5, 1.0, 2.0]


def test_sweep_single_point():
    cfg = quad_config(rounds=30, metric_every=30)
    res = sweep(cfg, [0.01])
    assert res.best_gamma == 0.01
    assert len(res.table) == 1


def test_sweep_noiseless_prefers_largest_stable_step():
    prob = generate_quadratic(2, 12, 0.2, 0.0, seed=6, sigma=0.0)
    hp = HyperParams(gamma=1.0, eta=1.0, rounds=60)
    cfg = RunConfig("ef21_sgd", prob, top_k(3, 12), hp, seeds=(0,), metric_every=60)
    grid = power_grid(-20, 0)
    res = sweep(cfg, grid, "final_loss")
    scores = {row["gamma"]: row["score"] for row in res.table if not row["diverged"]}
    assert all(res.best_score <= s for s in scores.values())
    # every smaller step converges slower on a noiseless strongly convex quadratic
    assert all(res.best_gamma >= g for g, s in scores.items() if s > res.best_score)


def test_sweep_all_diverged_raises():
    cfg = quad_config(rounds=50, metric_every=50)
    with pytest.raises(RuntimeError):
        sweep(cfg, [1e9, 1e12])


def test_sweep_rejects_bad_inputs():
    cfg = quad_config(rounds=10)
    with pytest.raises(ValueError):
        sweep(cfg, [])
    with pytest.raises(ValueError):
        sweep(cfg, [0.1], criterion="vibes")


# -- CSV round trips ----------------------------------------------------------------


def test_trace_csv_round_trip(tmp_path):
    cfg = quad_config(rounds=25, metric_every=5, lyapunov=True, lyapunov_every=5)
    tr = run(cfg, 4)
    path = str(tmp_path / "trace.csv")
    write_trace_csv(path, tr)
    back = read_trace_csv(path)
    assert len(back.records) == len(tr.records)
    for ra, rb in zip(tr.records, back.records):
        assert ra == rb  # repr round-trip keeps floats bitwise


def test_trace_csv_records_failure(tmp_path):
    cfg = quad_config(rounds=100)
    cfg = replace(cfg, hyper=replace(cfg.hyper, gamma=1e9))
    tr = run(cfg, 0)
    path = str(tmp_path / "diverged.csv")
    write_trace_csv(path, tr)
    back = read_trace_csv(path)
    assert back.failure_round == tr.failure_round


def test_quantile_csv_schema(tmp_path):
    cfg = quad_config(rounds=20, metric_every=5, seeds=(0, 1, 2))
    qt = run_quantiles(cfg)
    path = str(tmp_path / "q.csv")
    write_quantiles_csv(path, qt)
    header = open(path).readline().strip().split(",")
    assert header[0] == "t"
    assert "grad_norm_med" in header and "obj_gap_q25" in header and "lyapunov_q75" in header


def test_counterexample_run_matches_expected_shape():
    prob = CounterexampleProblem(sigma=1.0, n_nodes=1, x0=(0.0, -0.01))
    hp = HyperParams(gamma=1e-3, eta=1e-3, rounds=100)
    cfg = RunConfig("ef21_sgdm", prob, top_k(1, 2), hp, seeds=(0,), metric_every=50)
    tr = run(cfg, 0)
    assert tr.records[0].grad_norm == pytest.approx(0.01, rel=1e-12)
    assert tr.records[0].obj_gap == pytest.approx(5e-5, rel=1e-12)
    assert tr.records[-1].coords_cum == 100
