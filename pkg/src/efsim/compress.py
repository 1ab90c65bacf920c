"""Sparsifying compression operators and their error guarantees.

Two operator families are covered:

* contractive operators, whose squared compression error is at most a
  ``(1 - alpha)`` fraction of the input's squared norm (TopK, unscaled
  RandK with ``alpha = k/d``, and the identity with ``alpha = 1``), and
* absolute operators, whose squared error is bounded by a constant
  ``Delta**2`` regardless of the input (hard thresholding, with
  ``Delta = sqrt(d) * tau``).

RandK is deliberately left unscaled: the scaled variant is unbiased but no
longer contractive, and none of the implemented algorithms needs
unbiasedness.  Communication is accounted in coordinates sent; a secondary
bit estimate (32-bit index + 64-bit value per coordinate) is provided as an
explicitly labeled modeling choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Compressor",
    "CompressedVector",
    "top_k",
    "rand_k",
    "identity",
    "hard_threshold",
    "compress",
    "densify",
    "contraction_alpha",
    "absolute_delta",
    "coordinates_sent",
    "coordinates_to_bits",
    "ContractionReport",
    "verify_contractive",
]

BITS_PER_COORDINATE = 32 + 64  # index width + value width, modeling choice


@dataclass(frozen=True)
class Compressor:
    """Description of a compression operator applied to vectors in R^d."""

    kind: str  # 'topk' | 'randk' | 'identity' | 'hard_threshold'
    dim: int
    k: int = 0
    tau: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind in ("topk", "randk"):
            if not 1 <= self.k <= self.dim:
                raise ValueError(f"{self.kind} requires 1 <= k <= d, got k={self.k}, d={self.dim}")
        elif self.kind == "hard_threshold":
            if not self.tau > 0:
                raise ValueError("hard_threshold requires tau > 0")
        elif self.kind != "identity":
            raise ValueError(f"unknown compressor kind {self.kind!r}")

    @property
    def is_contractive(self) -> bool:
        return self.kind in ("topk", "randk", "identity")

    @property
    def is_absolute(self) -> bool:
        return self.kind == "hard_threshold"

    @property
    def is_random(self) -> bool:
        return self.kind == "randk"


def top_k(k: int, dim: int) -> Compressor:
    return Compressor("topk", dim, k=k)


def rand_k(k: int, dim: int) -> Compressor:
    return Compressor("randk", dim, k=k)


def identity(dim: int) -> Compressor:
    return Compressor("identity", dim)


def hard_threshold(tau: float, dim: int) -> Compressor:
    return Compressor("hard_threshold", dim, tau=tau)


@dataclass
class CompressedVector:
    """Sparse message: strictly increasing indices in [0, d) with values."""

    indices: np.ndarray  # int64, sorted ascending, unique
    values: np.ndarray  # float64, same length
    dim: int


def compress(spec: Compressor, x: np.ndarray, rng: np.random.Generator | None = None) -> CompressedVector:
    """Apply the operator to x, returning the kept coordinates.

    TopK keeps the k largest-magnitude entries with ties broken toward the
    lowest index (determinism is required for bitwise replay).  RandK keeps
    k coordinates chosen uniformly without replacement, unscaled.  Identity
    keeps everything.  Hard thresholding keeps entries with |x_j| >= tau.
    """
    if x.shape != (spec.dim,):
        raise ValueError(f"dimension mismatch: compressor dim {spec.dim}, vector shape {x.shape}")
    if spec.kind == "identity":
        idx = np.arange(spec.dim, dtype=np.int64)
        return CompressedVector(idx, x.copy(), spec.dim)
    if spec.kind == "topk":
        if spec.k == 1:
            j = int(np.argmax(np.abs(x)))  # argmax takes the first (lowest-index) maximum
            return CompressedVector(np.array([j], dtype=np.int64), x[j : j + 1].copy(), spec.dim)
        # stable sort on (-|x|, index): lowest index wins ties
        order = np.argsort(-np.abs(x), kind="stable")
        idx = np.sort(order[: spec.k])
        return CompressedVector(idx.astype(np.int64), x[idx], spec.dim)
    if spec.kind == "randk":
        if rng is None:
            raise ValueError("randk requires a random stream")
        idx = np.sort(rng.choice(spec.dim, size=spec.k, replace=False)).astype(np.int64)
        return CompressedVector(idx, x[idx], spec.dim)
    # hard threshold
    idx = np.nonzero(np.abs(x) >= spec.tau)[0].astype(np.int64)
    return CompressedVector(idx, x[idx], spec.dim)


def densify(c: CompressedVector) -> np.ndarray:
    out = np.zeros(c.dim, dtype=np.float64)
    out[c.indices] = c.values
    return out


def contraction_alpha(spec: Compressor) -> float | None:
    """Contraction constant alpha, or None for non-contractive operators."""
    if spec.kind in ("topk", "randk"):
        return spec.k / spec.dim
    if spec.kind == "identity":
        return 1.0
    return None


def absolute_delta(spec: Compressor) -> float | None:
    """Worst-case absolute error bound Delta, or None if not absolute.

    For hard thresholding every dropped entry is below tau in magnitude, so
    the squared error is at most d * tau**2.
    """
    if spec.kind == "hard_threshold":
        return float(np.sqrt(spec.dim) * spec.tau)
    return None


def coordinates_sent(c: CompressedVector) -> int:
    return int(len(c.indices))


def coordinates_to_bits(n_coordinates: int) -> int:
    """Secondary cost column: coordinates priced at 32+64 bits each."""
    return int(n_coordinates) * BITS_PER_COORDINATE


@dataclass
class ContractionReport:
    max_ratio: float
    mean_ratio: float
    trials: int


def verify_contractive(
    spec: Compressor,
    trials: int,
    rng: np.random.Generator,
    resamplings: int = 100,
) -> ContractionReport:
    """Empirically measure ||C(x) - x||^2 / ||x||^2 on Gaussian inputs.

    For randomized operators (RandK) the ratio for each draw is averaged
    over ``resamplings`` independent applications, since the contraction
    bound holds in expectation.  For the deterministic TopK the maximum
    ratio must not exceed 1 - k/d on any input.
    """
    if not spec.is_contractive:
        raise ValueError(f"{spec.kind} is not a contractive compressor")
    ratios = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        x = rng.standard_normal(spec.dim)
        nx = float(x @ x)
        if spec.is_random:
            acc = 0.0
            for _ in range(resamplings):
                err = x - densify(compress(spec, x, rng))
                acc += float(err @ err)
            ratios[t] = acc / resamplings / nx
        else:
            err = x - densify(compress(spec, x, rng))
            ratios[t] = float(err @ err) / nx
    return ContractionReport(float(ratios.max()), float(ratios.mean()), trials)
