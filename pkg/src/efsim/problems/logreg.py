"""Multiclass logistic regression with a nonconvex coordinate-wise
regularizer, plus LIBSVM-format ingestion and a synthetic blob generator.

The model keeps one weight block of size l+1 per class (l features plus a
constant-1 bias appended to every example), so the parameter dimension is
d = (l+1) * c.  The node objective is the mean cross-entropy of its
examples plus ``reg * sum_y sum_k w_k^2 / (1 + w_k^2)`` over the weight
coordinates (bias excluded).  Stochastic gradients are mini-batches sampled
with replacement from the node's examples.
"""

from __future__ import annotations

import numpy as np

from .base import Problem, SmoothnessInfo, power_iteration_norm

__all__ = [
    "LogRegProblem",
    "parse_libsvm",
    "write_libsvm",
    "split_examples",
    "load_libsvm_problem",
    "make_blobs",
]


class LogRegProblem(Problem):
    def __init__(self, features: list[np.ndarray], labels: list[np.ndarray], classes: int, reg: float = 1e-3):
        """features[i]: (m_i, l) raw node examples; labels[i]: ints in [1, c]."""
        if len(features) != len(labels) or not features:
            raise ValueError("features and labels must be nonempty and aligned")
        self.classes = int(classes)
        self.reg = float(reg)
        self.n_nodes = len(features)
        l = features[0].shape[1]
        self.n_features = l
        self.dim = (l + 1) * self.classes
        self.a = []  # bias-augmented example matrices, (m_i, l+1)
        self.y = []  # zero-based labels
        for feat, lab in zip(features, labels):
            feat = np.asarray(feat, dtype=np.float64)
            lab = np.asarray(lab, dtype=np.int64)
            if feat.ndim != 2 or feat.shape[1] != l:
                raise ValueError("all nodes must share the feature dimension")
            if feat.shape[0] == 0:
                raise ValueError("every node needs at least one example")
            if lab.min() < 1 or lab.max() > self.classes:
                raise ValueError(f"labels must lie in [1, {self.classes}]")
            self.a.append(np.hstack([feat, np.ones((feat.shape[0], 1))]))
            self.y.append(lab - 1)
        self.m_i = np.array([a.shape[0] for a in self.a])
        self.sigma = 0.0  # data-driven noise; no closed-form bound is claimed
        # start at zero weights: symmetric softmax, loss log(c)
        self.x0 = np.zeros(self.dim)
        self._smooth: SmoothnessInfo | None = None

    # -- objective pieces --------------------------------------------------

    def _weights(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.classes, self.n_features + 1)

    def _reg_value(self, x: np.ndarray) -> float:
        w = self._weights(x)[:, : self.n_features]
        return self.reg * float(np.sum(w**2 / (1.0 + w**2)))

    def _reg_grad(self, x: np.ndarray) -> np.ndarray:
        wmat = self._weights(x)
        out = np.zeros_like(wmat)
        w = wmat[:, : self.n_features]
        out[:, : self.n_features] = self.reg * 2.0 * w / (1.0 + w**2) ** 2
        return out.ravel()

    def value_and_grad(self, i: int, x: np.ndarray, batch_idx: np.ndarray | None = None):
        """Cross-entropy (plus regularizer) and its gradient on a batch.

        ``batch_idx`` selects example rows of node i; None means the full
        local dataset.  Softmax is stabilized by max subtraction.
        """
        a = self.a[i]
        y = self.y[i]
        if batch_idx is not None:
            if len(batch_idx) == 0:
                raise ValueError("empty batch")
            a = a[batch_idx]
            y = y[batch_idx]
        m = a.shape[0]
        logits = a @ self._weights(x).T  # (m, c)
        logits -= logits.max(axis=1, keepdims=True)
        expz = np.exp(logits)
        probs = expz / expz.sum(axis=1, keepdims=True)
        loss = -float(np.mean(np.log(probs[np.arange(m), y] + 1e-300)))
        resid = probs
        resid[np.arange(m), y] -= 1.0
        grad = (resid.T @ a) / m  # (c, l+1)
        return loss + self._reg_value(x), grad.ravel() + self._reg_grad(x)

    # -- Problem interface -------------------------------------------------

    def full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.value_and_grad(i, x)[1]

    def stoch_grad(self, i, x, rng, batch: int = 1) -> np.ndarray:
        idx = rng.integers(0, self.m_i[i], size=batch)
        return self.value_and_grad(i, x, idx)[1]

    def stoch_grad_pair(self, i, x_new, x_old, rng, batch: int = 1):
        idx = rng.integers(0, self.m_i[i], size=batch)
        return self.value_and_grad(i, x_new, idx)[1], self.value_and_grad(i, x_old, idx)[1]

    def value(self, x: np.ndarray) -> float:
        return float(np.mean([self.value_and_grad(i, x)[0] for i in range(self.n_nodes)]))

    def smoothness(self) -> SmoothnessInfo:
        """Analytic upper bounds: softmax curvature dominated by
        ||A^T A||_2 / (4 m) and the regularizer's curvature peak 2*reg."""
        if self._smooth is not None:
            return self._smooth
        l_i = np.empty(self.n_nodes)
        ell_i = np.empty(self.n_nodes)
        for i, a in enumerate(self.a):
            gram_norm = power_iteration_norm(lambda v, a=a: a.T @ (a @ v), a.shape[1])
            l_i[i] = gram_norm / (4.0 * a.shape[0]) + 2.0 * self.reg
            ell_i[i] = float(np.max(np.sum(a**2, axis=1))) / 4.0 + 2.0 * self.reg
        self._smooth = SmoothnessInfo(
            L=float(np.mean(l_i)),
            L_i=l_i,
            L_tilde=float(np.sqrt(np.mean(l_i**2))),
            ell_tilde=float(np.sqrt(np.mean(ell_i**2))),
            f_star=None,
            exact=False,
        )
        return self._smooth


# -- dataset handling -------------------------------------------------------


def parse_libsvm(path: str, classes: int, n_features: int) -> tuple[np.ndarray, np.ndarray]:
    """Read a LIBSVM text file into dense (X, y) with 1-based labels.

    Lines look like ``label idx:val idx:val ...`` with strictly 1-based
    feature indices.  Malformed lines are reported with their line number.
    """
    rows = []
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                label = int(float(parts[0]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad label field {parts[0]!r}") from exc
            if not 1 <= label <= classes:
                raise ValueError(f"{path}:{lineno}: label {label} outside [1, {classes}]")
            x = np.zeros(n_features)
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad feature token {tok!r}") from exc
                if not 1 <= idx <= n_features:
                    raise ValueError(f"{path}:{lineno}: feature index {idx} outside [1, {n_features}]")
                x[idx - 1] = val
            rows.append(x)
            labels.append(label)
    if not rows:
        raise ValueError(f"{path}: no examples found")
    return np.array(rows), np.array(labels, dtype=np.int64)


def write_libsvm(path: str, features: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w") as fh:
        for x, y in zip(features, labels):
            toks = [str(int(y))]
            toks += [f"{j + 1}:{float(v)!r}" for j, v in enumerate(x) if v != 0.0]
            fh.write(" ".join(toks) + "\n")


def split_examples(
    features: np.ndarray, labels: np.ndarray, n_nodes: int, policy: str = "by_label", seed: int = 0
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Partition examples across nodes.

    ``by_label`` sorts examples by label (stable) and hands out contiguous
    chunks, so each node sees a narrow label range (heterogeneous setting).
    ``uniform`` deals a seeded random permutation into equal chunks.
    """
    m = len(labels)
    if n_nodes < 1 or n_nodes > m:
        raise ValueError(f"cannot split {m} examples across {n_nodes} nodes")
    if policy == "by_label":
        order = np.argsort(labels, kind="stable")
    elif policy == "uniform":
        order = np.random.Generator(np.random.Philox(key=seed)).permutation(m)
    else:
        raise ValueError(f"unknown split policy {policy!r}")
    bounds = np.linspace(0, m, n_nodes + 1).astype(int)
    feats, labs = [], []
    for i in range(n_nodes):
        part = order[bounds[i] : bounds[i + 1]]
        feats.append(features[part])
        labs.append(labels[part])
    return feats, labs


def load_libsvm_problem(
    path: str,
    classes: int,
    n_features: int,
    n_nodes: int,
    policy: str = "by_label",
    seed: int = 0,
    reg: float = 1e-3,
) -> LogRegProblem:
    x, y = parse_libsvm(path, classes, n_features)
    feats, labs = split_examples(x, y, n_nodes, policy, seed)
    return LogRegProblem(feats, labs, classes, reg=reg)


def make_blobs(classes: int, n_features: int, examples: int, seed: int = 0, spread: float = 3.0):
    """Balanced Gaussian-blob multiclass data for desk-scale experiments."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    centers = spread * rng.standard_normal((classes, n_features))
    labels = (np.arange(examples) % classes) + 1
    labels = rng.permutation(labels)
    features = centers[labels - 1] + rng.standard_normal((examples, n_features))
    return features, labels
