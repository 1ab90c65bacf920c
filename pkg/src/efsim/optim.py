"""The algorithm family as explicit synchronous state machines.

One round is: the server moves the iterate against the aggregated state
``x <- x - gamma * g`` (the plain error-feedback method EF14-SGD keeps its
step size inside the node states and uses ``x <- x - g``), every node
refreshes its estimator at the new iterate and sends a compressed message,
and the server folds the messages back into ``g`` in fixed ascending node
order so parallel and serial execution are bit-identical.

Node update rules (per node i, fresh sample at the new iterate x'):

* sgd:             g_i <- grad f_i(x', xi)                       (identity only)
* sgdm:            v_i <- (1-eta) v_i + eta grad f_i(x', xi);  g_i <- v_i
* ef21_sgd:        g_i <- g_i + C(grad f_i(x', xi) - g_i)
* ef21_sgdm:       v_i as in sgdm;  g_i <- g_i + C(v_i - g_i)
* ef21_sgd2m:      v_i as above;  u_i <- (1-eta) u_i + eta v_i;
                   g_i <- g_i + C(u_i - g_i)
* ef21_sgdm_abs:   v_i as above;  g_i <- g_i + gamma * C((v_i - g_i)/gamma)
* ef21_storm:      one sample evaluated at both x' and the previous iterate,
                   w_i <- grad f_i(x', xi) + (1-eta)(w_i - grad f_i(x, xi));
                   g_i <- g_i + C(w_i - g_i)
* ef14_sgd:        e_i <- e_i + gamma grad f_i(x, xi_old) - g_i;
                   g_i <- C(e_i + gamma grad f_i(x', xi))
* ef21_sgd_ideal / ef21_sgdm_ideal: diagnostic variants that replace the
  stored states by exact gradients, g_i <- grad f_i(x') + C(eta * noise);
  they transmit a dense vector every round.

Compressed-state updates write the kept coordinates of the target directly
into g_i (mathematically identical to adding the transmitted residual, and
it makes the eta = 1 and identity-compressor reductions exact bitwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compress import Compressor, compress, coordinates_sent, densify
from .core import NumericFailure, StreamFactory, ensure_finite
from .problems.base import Problem, SmoothnessInfo

__all__ = [
    "ALGORITHMS",
    "HyperParams",
    "NodeState",
    "ServerState",
    "RoundLog",
    "schedule_at",
    "validate_pairing",
    "init",
    "run_round",
    "theoretical_params",
    "state_fields",
]

SGD = "sgd"
SGDM = "sgdm"
EF14_SGD = "ef14_sgd"
EF21_SGD = "ef21_sgd"
EF21_SGDM = "ef21_sgdm"
EF21_SGD2M = "ef21_sgd2m"
EF21_SGDM_ABS = "ef21_sgdm_abs"
EF21_STORM = "ef21_storm"
EF21_SGD_IDEAL = "ef21_sgd_ideal"
EF21_SGDM_IDEAL = "ef21_sgdm_ideal"

ALGORITHMS = (
    SGD,
    SGDM,
    EF14_SGD,
    EF21_SGD,
    EF21_SGDM,
    EF21_SGD2M,
    EF21_SGDM_ABS,
    EF21_STORM,
    EF21_SGD_IDEAL,
    EF21_SGDM_IDEAL,
)

_IDEAL = (EF21_SGD_IDEAL, EF21_SGDM_IDEAL)
_USES_ETA = (SGDM, EF21_SGDM, EF21_SGD2M, EF21_SGDM_ABS, EF21_STORM, EF21_SGDM_IDEAL)
# kinds whose node state carries the momentum estimator v_i (needed by the
# Lyapunov diagnostic)
MOMENTUM_KINDS = (SGDM, EF21_SGDM, EF21_SGD2M, EF21_SGDM_ABS)


@dataclass
class HyperParams:
    """Run hyperparameters; schedules follow eta_t with gamma_t = gamma * eta_t.

    * constant:   gamma_t = gamma, eta_t = eta
    * inv_sqrt_t: eta_t = eta / sqrt(t+1), gamma_t = gamma * eta_t
    * inv_sqrt_T: eta_t = eta / sqrt(rounds+1) for all t, gamma_t = gamma * eta_t
    """

    gamma: float
    rounds: int
    eta: float = 1.0
    batch: int = 1
    b_init: int = 1
    schedule: str = "constant"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.batch < 1 or self.b_init < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be nonnegative")
        if self.schedule not in ("constant", "inv_sqrt_t", "inv_sqrt_T"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def schedule_at(hp: HyperParams, t: int) -> tuple[float, float]:
    """(gamma_t, eta_t) used by round t."""
    if hp.schedule == "constant":
        return hp.gamma, hp.eta
    if hp.schedule == "inv_sqrt_t":
        eta_t = hp.eta / math.sqrt(t + 1)
    else:  # inv_sqrt_T
        eta_t = hp.eta / math.sqrt(hp.rounds + 1)
    return hp.gamma * eta_t, eta_t


@dataclass
class NodeState:
    g: np.ndarray
    v: np.ndarray | None = None
    u: np.ndarray | None = None
    w: np.ndarray | None = None
    e: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    sg_prev: np.ndarray | None = None  # cached sample gradient (plain error feedback)


@dataclass
class ServerState:
    x: np.ndarray
    g: np.ndarray
    t: int = 0


@dataclass
class RoundLog:
    coords_sent: int = 0  # total over nodes this round
    grad_evals: int = 0  # stochastic gradient evaluations per node


def state_fields(kind: str) -> tuple[str, ...]:
    """Which NodeState fields a given algorithm keeps."""
    return {
        SGD: ("g",),
        SGDM: ("g", "v"),
        EF14_SGD: ("g", "e", "sg_prev"),
        EF21_SGD: ("g",),
        EF21_SGDM: ("g", "v"),
        EF21_SGD2M: ("g", "v", "u"),
        EF21_SGDM_ABS: ("g", "v"),
        EF21_STORM: ("g", "w", "x_prev"),
        EF21_SGD_IDEAL: ("g",),
        EF21_SGDM_IDEAL: ("g",),
    }[kind]


def validate_pairing(kind: str, comp: Compressor) -> None:
    if kind not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {kind!r}")
    if kind == EF21_SGDM_ABS:
        if not comp.is_absolute:
            raise ValueError("ef21_sgdm_abs requires an absolute compressor")
    elif kind in (SGD, SGDM):
        if comp.kind != "identity":
            raise ValueError(f"{kind} is an uncompressed baseline; use the identity compressor")
    elif not comp.is_contractive:
        raise ValueError(f"{kind} requires a contractive compressor")


def init(
    kind: str,
    problem: Problem,
    hp: HyperParams,
    comp: Compressor,
    streams: StreamFactory,
) -> tuple[ServerState, list[NodeState], RoundLog]:
    """Build round-0 states.

    All kinds except plain error feedback start their estimators from a
    size-``b_init`` mini-batch gradient at x0 (v = u = w = g there);
    ef14_sgd starts from zero error and zero state but draws and caches its
    first sample gradient.  Stream (i, 0) is reserved for initialization.
    """
    validate_pairing(kind, comp)
    if comp.dim != problem.dim:
        raise ValueError("compressor dimension does not match the problem")
    x0 = problem.x0.copy()
    nodes: list[NodeState] = []
    gsum = np.zeros(problem.dim)
    for i in range(problem.n_nodes):
        rng = streams.stream(i, 0)
        if kind == EF14_SGD:
            sg0 = problem.stoch_grad(i, x0, rng, hp.batch)
            node = NodeState(g=np.zeros(problem.dim), e=np.zeros(problem.dim), sg_prev=sg0)
            evals = hp.batch
        else:
            g0 = problem.stoch_grad(i, x0, rng, hp.b_init)
            node = NodeState(g=g0.copy())
            if kind in (SGDM, EF21_SGDM, EF21_SGDM_ABS):
                node.v = g0.copy()
            elif kind == EF21_SGD2M:
                node.v = g0.copy()
                node.u = g0.copy()
            elif kind == EF21_STORM:
                node.w = g0.copy()
                node.x_prev = x0.copy()
            evals = hp.b_init
        gsum += node.g
        nodes.append(node)
    server = ServerState(x=x0, g=gsum / problem.n_nodes, t=0)
    return server, nodes, RoundLog(coords_sent=0, grad_evals=evals)


def _apply_compressed_target(node: NodeState, target: np.ndarray, comp: Compressor, rng) -> tuple[np.ndarray, np.ndarray]:
    """Compress target - g_i, assign the kept coordinates, return message."""
    c = compress(comp, target - node.g, rng)
    node.g[c.indices] = target[c.indices]
    return c.indices, c.values


def run_round(
    kind: str,
    server: ServerState,
    nodes: list[NodeState],
    problem: Problem,
    hp: HyperParams,
    comp: Compressor,
    streams: StreamFactory,
) -> RoundLog:
    """Execute one synchronous round in place; returns the round's costs.

    Raises NumericFailure (carrying the round index) if the iterate or the
    aggregated state leaves the finite range.  Overflow is an expected
    outcome for unstable step sizes (tuning grids include them), so numpy's
    warnings are silenced in favor of the explicit finiteness checks.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_round_unchecked(kind, server, nodes, problem, hp, comp, streams)


def _run_round_unchecked(kind, server, nodes, problem, hp, comp, streams) -> RoundLog:
    t = server.t
    gamma_t, eta_t = schedule_at(hp, t)
    n = problem.n_nodes
    if kind == EF14_SGD:
        x_new = server.x - server.g
    else:
        x_new = server.x - gamma_t * server.g
    ensure_finite(x_new, "iterate", t)

    log = RoundLog()
    if kind in (SGD, SGDM, EF21_SGD, EF21_SGDM, EF21_SGD2M, EF21_STORM):
        delta = np.zeros(problem.dim)
        for i in range(n):
            rng = streams.stream(i, t + 1)
            node = nodes[i]
            if kind == EF21_STORM:
                sg_new, sg_old = problem.stoch_grad_pair(i, x_new, node.x_prev, rng, hp.batch)
                node.w = sg_new + (1.0 - eta_t) * (node.w - sg_old)
                node.x_prev = x_new
                target = node.w
                log.grad_evals = 2 * hp.batch
            else:
                sg = problem.stoch_grad(i, x_new, rng, hp.batch)
                log.grad_evals = hp.batch
                if kind in (SGD, EF21_SGD):
                    target = sg
                else:
                    node.v = (1.0 - eta_t) * node.v + eta_t * sg
                    target = node.v
                    if kind == EF21_SGD2M:
                        node.u = (1.0 - eta_t) * node.u + eta_t * node.v
                        target = node.u
            idx, vals = _apply_compressed_target(node, target, comp, rng)
            delta[idx] += vals  # indices are unique, plain fancy add is safe
            log.coords_sent += len(idx)
        server.g = server.g + delta / n
    elif kind == EF21_SGDM_ABS:
        delta = np.zeros(problem.dim)
        for i in range(n):
            rng = streams.stream(i, t + 1)
            node = nodes[i]
            sg = problem.stoch_grad(i, x_new, rng, hp.batch)
            node.v = (1.0 - eta_t) * node.v + eta_t * sg
            c = compress(comp, (node.v - node.g) / gamma_t, rng)
            scaled = gamma_t * c.values
            node.g[c.indices] += scaled
            delta[c.indices] += scaled
            log.coords_sent += coordinates_sent(c)
            log.grad_evals = hp.batch
        server.g = server.g + delta / n
    elif kind == EF14_SGD:
        gsum = np.zeros(problem.dim)
        for i in range(n):
            rng = streams.stream(i, t + 1)
            node = nodes[i]
            node.e = node.e + gamma_t * node.sg_prev - node.g
            sg = problem.stoch_grad(i, x_new, rng, hp.batch)
            c = compress(comp, node.e + gamma_t * sg, rng)
            node.g = densify(c)
            node.sg_prev = sg
            gsum += node.g
            log.coords_sent += coordinates_sent(c)
            log.grad_evals = hp.batch
        server.g = gsum / n
    elif kind in _IDEAL:
        gsum = np.zeros(problem.dim)
        for i in range(n):
            rng = streams.stream(i, t + 1)
            full = problem.full_grad(i, x_new)
            sg = problem.stoch_grad(i, x_new, rng, hp.batch)
            noise = sg - full
            if kind == EF21_SGDM_IDEAL:
                noise = eta_t * noise
            gsum += full + densify(compress(comp, noise, rng))
            log.coords_sent += problem.dim  # dense states are shipped
            log.grad_evals = hp.batch
        server.g = gsum / n
    else:
        raise ValueError(f"unknown algorithm {kind!r}")

    ensure_finite(server.g, "aggregated state", t)
    server.x = x_new
    server.t = t + 1
    return log


def _inf_if_zero_div(num: float, den: float) -> float:
    return math.inf if den == 0 else num / den


def theoretical_params(
    kind: str,
    smooth: SmoothnessInfo,
    alpha: float | None,
    sigma: float,
    n: int,
    rounds: int,
    delta0: float,
    delta_abs: float | None = None,
    batch: int = 1,
) -> HyperParams:
    """Step size, momentum, and initial batch size prescribed by the
    convergence analysis of each method.

    ``delta0`` is the initial optimality gap f(x0) - f*; ``delta_abs`` is
    the absolute compressor's error bound (required by ef21_sgdm_abs);
    the variance-reduced variant needs ``smooth.ell_tilde``.
    """
    big_l, l_tilde = smooth.L, smooth.L_tilde
    ld = big_l * delta0
    t_eff = max(rounds, 1)
    if kind in (EF21_SGDM, EF21_SGD2M):
        if alpha is None:
            raise ValueError("contractive constant alpha required")
        b_init = 1 if sigma == 0 or ld == 0 else max(1, math.ceil(sigma**2 / ld))
        terms = [
            1.0,
            _inf_if_zero_div(ld * alpha**2, sigma**2 * t_eff) ** 0.25,
            _inf_if_zero_div(ld * n, sigma**2 * t_eff) ** 0.5,
            _inf_if_zero_div(alpha * math.sqrt(max(ld * b_init, 0.0)), sigma),
        ]
        if kind == EF21_SGDM:
            terms.append(_inf_if_zero_div(ld * alpha, sigma**2 * t_eff) ** (1.0 / 3.0))
            gamma_div, eta_div = 20.0, 7.0
        else:
            gamma_div, eta_div = 60.0, 16.0
        eta = min(terms)
        gamma = min(alpha / (gamma_div * l_tilde), eta / (eta_div * big_l))
        return HyperParams(gamma=gamma, eta=eta, batch=batch, b_init=b_init, rounds=rounds)
    if kind == EF21_SGDM_ABS:
        if delta_abs is None:
            raise ValueError("absolute error bound required for ef21_sgdm_abs")
        eta = min(
            1.0,
            _inf_if_zero_div(big_l**3 * delta0, delta_abs**2 * t_eff) ** (1.0 / 3.0),
            _inf_if_zero_div(ld * n, sigma**2 * t_eff) ** 0.5,
        )
        gamma = eta / (4.0 * big_l)
        b_init = 1 if sigma == 0 or ld == 0 else max(1, math.ceil(sigma**2 / (ld * n)))
        return HyperParams(gamma=gamma, eta=eta, batch=batch, b_init=b_init, rounds=rounds)
    if kind == EF21_STORM:
        if alpha is None:
            raise ValueError("contractive constant alpha required")
        if smooth.ell_tilde is None:
            raise ValueError("per-sample smoothness ell_tilde required for ef21_storm")
        ell = smooth.ell_tilde
        eld = ell * delta0
        eta = min(
            alpha,
            _inf_if_zero_div(eld * alpha**2, sigma**2 * math.sqrt(n) * t_eff) ** (2.0 / 7.0),
            _inf_if_zero_div(eld * alpha, sigma**2 * math.sqrt(n) * t_eff) ** (2.0 / 5.0),
            _inf_if_zero_div(eld * math.sqrt(n), sigma**2 * t_eff) ** (2.0 / 3.0),
        )
        gamma = min(alpha / (8.0 * l_tilde), math.sqrt(alpha) / (6.0 * ell), math.sqrt(n * eta) / (8.0 * ell))
        b_init = max(1, math.ceil(alpha * n / t_eff))
        if sigma > 0 and ld > 0:
            b_init = max(b_init, math.ceil(sigma**2 / (ld * n)))
        return HyperParams(gamma=gamma, eta=eta, batch=batch, b_init=b_init, rounds=rounds)
    if kind == SGDM:
        # parameter-agnostic time-varying momentum: eta_t = 1/sqrt(t+1)
        return HyperParams(gamma=1.0 / (3.0 * big_l), eta=1.0, batch=batch, b_init=1, rounds=rounds, schedule="inv_sqrt_t")
    raise ValueError(f"no prescribed parameter formula for {kind!r}")
