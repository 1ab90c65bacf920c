"""Common oracle interface for distributed objectives.

Each problem bundles, for ``n`` nodes, the node objectives f_i and their
gradient oracles.  The global objective is f(x) = (1/n) sum_i f_i(x).
Stochastic gradients are unbiased with vector-level variance at most
sigma^2 per node; mini-batches of size B average B independent
single-sample gradients, giving variance sigma^2 / B.

All oracles are read-only after construction, so nodes can be evaluated
concurrently as long as each (node, round) pair uses its own stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SmoothnessInfo", "Problem", "power_iteration_norm"]


@dataclass
class SmoothnessInfo:
    """Gradient-Lipschitz metadata consumed by step-size formulas.

    ``L`` bounds the gradient Lipschitz constant of the mean objective,
    ``L_i`` of each node objective, ``L_tilde`` is the quadratic mean
    sqrt((1/n) sum L_i^2).  ``ell_tilde`` is the analogous quantity for
    single-sample gradients when each realization is itself smooth (needed
    by variance-reduced estimators).  ``exact`` is False when the constants
    are analytic upper bounds rather than tight values.
    """

    L: float
    L_i: np.ndarray
    L_tilde: float
    ell_tilde: float | None = None
    f_star: float | None = None
    exact: bool = True


class Problem:
    """Oracle bundle; subclasses fill in the node oracles."""

    dim: int
    n_nodes: int
    x0: np.ndarray
    sigma: float

    def full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad(self, i: int, x: np.ndarray, rng: np.random.Generator, batch: int = 1) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad_pair(
        self, i: int, x_new: np.ndarray, x_old: np.ndarray, rng: np.random.Generator, batch: int = 1
    ) -> tuple[np.ndarray, np.ndarray]:
        """Two stochastic gradients sharing one noise realization.

        Required by recursive variance-reduced estimators, which difference
        gradients at consecutive iterates under the same sample.
        """
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        """Global objective f(x) = (1/n) sum_i f_i(x)."""
        raise NotImplementedError

    def smoothness(self) -> SmoothnessInfo:
        raise NotImplementedError

    @property
    def f_star(self) -> float | None:
        return self.smoothness().f_star

    def mean_full_grad(self, x: np.ndarray) -> np.ndarray:
        """(1/n) sum_i grad f_i(x), summed in ascending node order."""
        g = self.full_grad(0, x).copy()
        for i in range(1, self.n_nodes):
            g += self.full_grad(i, x)
        return g / self.n_nodes


def power_iteration_norm(
    matvec,
    dim: int,
    tol: float = 1e-8,
    max_iter: int = 20000,
    seed: int = 7,
) -> float:
    """Spectral norm of a symmetric operator given through its matvec.

    Plain power iteration on a seeded random start vector; stops when the
    Rayleigh quotient magnitude changes by less than ``tol`` relatively.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = abs(float(v @ matvec(v)))
        if abs(lam - lam_prev) <= tol * max(1.0, lam):
            return lam
        lam_prev = lam
    return lam_prev
