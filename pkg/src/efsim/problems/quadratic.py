"""Distributed quadratic objectives.

The generator follows the tridiagonal construction: each node's matrix is a
scaled copy ``(mu_i/4) * T`` of the d x d tridiagonal matrix T with 2 on the
diagonal and -1 off it, with Gaussian node-to-node scale noise
``mu_i = 1 + s * xi_i``.  The linear terms put all mass on the first
coordinate, ``b_i = (mu_i/4) * (-1 + s * xi_i', 0, ..., 0)``.  After
generation every matrix is shifted by ``(lam - lambda_min(mean Q)) * I`` so
the mean matrix has minimum eigenvalue exactly ``lam``, and the start point
is ``x0 = (sqrt(d), 0, ..., 0)``.

Generated problems keep the tridiagonal-plus-shift structure (matvecs are
O(d), which keeps d = 1000 runs cheap); arbitrary dense matrices are also
accepted for hand-built test cases.  Stochastic gradients add Gaussian
noise with per-coordinate variance sigma^2 / d, so the vector-level second
moment is sigma^2, matching how the variance bound is stated.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from scipy.linalg import solveh_banded

from ..core import derive_stream
from .base import Problem, SmoothnessInfo, power_iteration_norm

__all__ = ["QuadraticProblem", "generate_quadratic", "save_quadratic_task", "load_quadratic_task"]


def _tridiag_eigenvalues_range(d: int) -> tuple[float, float]:
    # eigenvalues of T are 4 sin^2(k pi / (2(d+1))), k = 1..d
    lo = 4.0 * math.sin(math.pi / (2.0 * (d + 1))) ** 2
    hi = 4.0 * math.sin(d * math.pi / (2.0 * (d + 1))) ** 2
    return lo, hi


def _tridiag_matvec(x: np.ndarray) -> np.ndarray:
    # T @ x for T = tridiag(-1, 2, -1)
    out = 2.0 * x
    out[:-1] -= x[1:]
    out[1:] -= x[:-1]
    return out


class QuadraticProblem(Problem):
    """f_i(x) = 0.5 x^T Q_i x - b_i^T x with additive Gaussian noise."""

    def __init__(
        self,
        b: np.ndarray,
        x0: np.ndarray,
        sigma: float = 0.0,
        tri_scale: np.ndarray | None = None,
        shift: float = 0.0,
        dense: np.ndarray | None = None,
        meta: dict | None = None,
    ):
        if (tri_scale is None) == (dense is None):
            raise ValueError("provide exactly one of tri_scale (structured) or dense matrices")
        self.b = np.asarray(b, dtype=np.float64)
        self.n_nodes, self.dim = self.b.shape
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.sigma = float(sigma)
        self.tri_scale = None if tri_scale is None else np.asarray(tri_scale, dtype=np.float64)
        self.shift = float(shift)
        self.dense = None if dense is None else np.asarray(dense, dtype=np.float64)
        self.meta = meta or {}
        self._smooth: SmoothnessInfo | None = None
        self._noise_scale = self.sigma / math.sqrt(self.dim)

    @classmethod
    def from_matrices(cls, qmats, bs, x0, sigma: float = 0.0) -> "QuadraticProblem":
        return cls(b=np.asarray(bs, dtype=np.float64), x0=x0, sigma=sigma, dense=np.asarray(qmats, dtype=np.float64))

    # -- matvecs ---------------------------------------------------------

    def matvec(self, i: int, x: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i] @ x
        return self.tri_scale[i] * _tridiag_matvec(x) + self.shift * x

    def mean_matvec(self, x: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return np.mean(self.dense, axis=0) @ x
        return float(np.mean(self.tri_scale)) * _tridiag_matvec(x) + self.shift * x

    # -- oracles ---------------------------------------------------------

    def full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.matvec(i, x) - self.b[i]

    def _noise(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        if batch == 1:  # same draws as the batched path, minus the reduction
            return self._noise_scale * rng.standard_normal(self.dim)
        return self._noise_scale * rng.standard_normal((batch, self.dim)).mean(axis=0)

    def stoch_grad(self, i: int, x: np.ndarray, rng: np.random.Generator, batch: int = 1) -> np.ndarray:
        g = self.full_grad(i, x)
        if self.sigma == 0.0:
            return g
        return g + self._noise(rng, batch)

    def stoch_grad_pair(self, i, x_new, x_old, rng, batch: int = 1):
        g_new = self.full_grad(i, x_new)
        g_old = self.full_grad(i, x_old)
        if self.sigma == 0.0:
            return g_new, g_old
        noise = self._noise(rng, batch)
        return g_new + noise, g_old + noise

    def node_value(self, i: int, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.matvec(i, x)) - float(self.b[i] @ x)

    def value(self, x: np.ndarray) -> float:
        bbar = self.b.mean(axis=0)
        return 0.5 * float(x @ self.mean_matvec(x)) - float(bbar @ x)

    # -- metadata --------------------------------------------------------

    def _spectral_range_structured(self, scale: float) -> tuple[float, float]:
        lo, hi = _tridiag_eigenvalues_range(self.dim)
        ends = (scale * lo + self.shift, scale * hi + self.shift)
        return min(ends), max(ends)

    def mean_lambda_min(self) -> float:
        if self.dense is not None:
            return float(np.linalg.eigvalsh(np.mean(self.dense, axis=0)).min())
        return self._spectral_range_structured(float(np.mean(self.tri_scale)))[0]

    def smoothness(self) -> SmoothnessInfo:
        if self._smooth is not None:
            return self._smooth
        if self.dense is not None:
            l_i = np.array(
                [power_iteration_norm(lambda v, i=i: self.matvec(i, v), self.dim) for i in range(self.n_nodes)]
            )
            l_mean = power_iteration_norm(self.mean_matvec, self.dim)
        else:
            # eigenvalues of scale*T + shift*I are linear in T's, so the
            # spectral norm sits at one of the two extreme eigenvalues
            l_i = np.array(
                [max(abs(e) for e in self._spectral_range_structured(float(s))) for s in self.tri_scale]
            )
            l_mean = max(abs(e) for e in self._spectral_range_structured(float(np.mean(self.tri_scale))))
        self._smooth = SmoothnessInfo(
            L=float(l_mean),
            L_i=l_i,
            L_tilde=float(np.sqrt(np.mean(l_i**2))),
            ell_tilde=float(np.sqrt(np.mean(l_i**2))),  # additive noise keeps per-sample Lipschitz constants
            f_star=self._compute_f_star(),
            exact=True,
        )
        return self._smooth

    def _compute_f_star(self) -> float | None:
        if self.mean_lambda_min() <= 0.0:
            return None
        bbar = self.b.mean(axis=0)
        if self.dense is not None:
            xstar = np.linalg.solve(np.mean(self.dense, axis=0), bbar)
        else:
            scale = float(np.mean(self.tri_scale))
            ab = np.zeros((2, self.dim))
            ab[0, 1:] = -scale
            ab[1, :] = 2.0 * scale + self.shift
            xstar = solveh_banded(ab, bbar)
        return 0.5 * float(xstar @ self.mean_matvec(xstar)) - float(bbar @ xstar)


def generate_quadratic(n: int, d: int, lam: float, s: float, seed: int, sigma: float = 0.0) -> QuadraticProblem:
    """Generate an n-node, d-dimensional quadratic task.

    Node scale noises are mu_i = 1 + s * xi_i and the linear-term noises are
    s * xi_i' with i.i.d. standard Gaussian draws; the common diagonal shift
    is chosen so the mean matrix has minimum eigenvalue exactly ``lam``.
    """
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    if lam < 0 or s < 0:
        raise ValueError("lam and s must be nonnegative")
    rng = derive_stream(seed, 0, 0)
    xi = rng.standard_normal((n, 2))
    mu_s = 1.0 + s * xi[:, 0]
    mu_b = s * xi[:, 1]
    tri_scale = mu_s / 4.0
    b = np.zeros((n, d))
    b[:, 0] = tri_scale * (-1.0 + mu_b)
    lo, hi = _tridiag_eigenvalues_range(d)
    mean_scale = float(np.mean(tri_scale))
    lam_min_unshifted = min(mean_scale * lo, mean_scale * hi)
    shift = lam - lam_min_unshifted
    x0 = np.zeros(d)
    x0[0] = math.sqrt(d)
    meta = {"n": n, "d": d, "lam": lam, "s": s, "seed": int(seed)}
    return QuadraticProblem(b=b, x0=x0, sigma=sigma, tri_scale=tri_scale, shift=shift, meta=meta)


def save_quadratic_task(problem: QuadraticProblem, path: str) -> None:
    """Write a generated task to a self-describing JSON file.

    The stored scales and shift reconstruct the exact matrices without
    re-running the generator, and the generation parameters are kept for
    provenance.
    """
    if problem.tri_scale is None:
        raise ValueError("only generated (structured) tasks can be serialized")
    doc = {
        "format": "efsim-quadratic-task",
        "version": 1,
        "params": problem.meta,
        "sigma": problem.sigma,
        "tri_scale": problem.tri_scale.tolist(),
        "b_first": problem.b[:, 0].tolist(),
        "shift": problem.shift,
        "dim": problem.dim,
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_quadratic_task(path: str, sigma: float | None = None) -> QuadraticProblem:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "efsim-quadratic-task":
        raise ValueError(f"{path} is not a quadratic task file")
    d = int(doc["dim"])
    tri_scale = np.asarray(doc["tri_scale"], dtype=np.float64)
    n = len(tri_scale)
    b = np.zeros((n, d))
    b[:, 0] = np.asarray(doc["b_first"], dtype=np.float64)
    x0 = np.zeros(d)
    x0[0] = math.sqrt(d)
    return QuadraticProblem(
        b=b,
        x0=x0,
        sigma=doc["sigma"] if sigma is None else sigma,
        tri_scale=tri_scale,
        shift=float(doc["shift"]),
        meta=dict(doc["params"]),
    )
