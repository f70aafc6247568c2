"""Codebook bottleneck: lookup, straight-through quantization and health metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import Tensor, add, gather_rows, mse, scale, stop_gradient, sub
from .errors import ConfigError, DimensionError, EmptyEvaluationError, NumericError, SchemaError


class Codebook:
    """``K`` learnable code vectors of dimension ``d_lat``."""

    def __init__(self, codes, name="codebook"):
        codes = np.array(codes, dtype=np.float64)
        if codes.ndim != 2:
            raise ConfigError(f"codes must be a K x d_lat matrix, got shape {codes.shape}")
        if codes.shape[0] < 2:
            raise ConfigError(f"codebook needs K >= 2 codes, got {codes.shape[0]}")
        if not np.all(np.isfinite(codes)):
            raise NumericError("codebook contains non-finite values")
        self.codes = Tensor(codes, requires_grad=True, name=name)

    @classmethod
    def random_normal(cls, K, d_lat, rng: np.random.Generator, std=1.0):
        return cls(rng.normal(0.0, std, size=(K, d_lat)))

    @property
    def K(self):
        return self.codes.shape[0]

    @property
    def d_lat(self):
        return self.codes.shape[1]

    @property
    def values(self):
        return self.codes.values


@dataclass
class UsageHistogram:
    counts: np.ndarray
    total: int

    @classmethod
    def from_indices(cls, indices, K):
        counts = np.bincount(np.asarray(indices, dtype=np.intp), minlength=K)
        if len(counts) > K:
            raise DimensionError(f"index {len(counts) - 1} out of range for K={K}")
        return cls(counts, int(counts.sum()))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("usage counts must be nonnegative")
        if int(self.counts.sum()) != self.total:
            raise ValueError(f"counts sum {int(self.counts.sum())} != total {self.total}")


def _raw(x):
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _codes(codebook):
    return codebook.values if isinstance(codebook, Codebook) else np.asarray(codebook, dtype=np.float64)


def sq_distances(z, codes) -> np.ndarray:
    """Exact squared Euclidean distances, shape ``[N, K]``."""
    diff = z[:, None, :] - codes[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def nearest_code(z, codebook) -> np.ndarray:
    """Index of the nearest code per row; ties go to the lowest index."""
    z, codes = _raw(z), _codes(codebook)
    if codes.shape[0] == 0:
        raise ConfigError("codebook is empty")
    if z.ndim != 2 or z.shape[1] != codes.shape[1]:
        raise DimensionError(f"latent shape {z.shape} does not match code dim {codes.shape[1]}")
    return np.argmin(sq_distances(z, codes), axis=1)


def quantize_ste(z: Tensor, codebook: Codebook):
    """Straight-through quantization ``sg[e_k] + (z - sg[z])``.

    The forward value is exactly ``e_k`` (``z - z`` is exactly zero); the
    gradient w.r.t. ``z`` is the identity and nothing reaches the codes.
    """
    if not np.all(np.isfinite(z.values)):
        raise NumericError("non-finite latent passed to quantizer")
    idx = nearest_code(z, codebook)
    e_k = stop_gradient(gather_rows(codebook.codes, idx))
    z_q = add(e_k, sub(z, stop_gradient(z)))
    return z_q, idx


def blend(z: Tensor, z_q: Tensor, alpha: float) -> Tensor:
    """``alpha * z + (1 - alpha) * z_q``."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return add(scale(z, alpha), scale(z_q, 1.0 - alpha))


def _check_indices(indices, codebook):
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= codebook.K):
        raise IndexError(f"code index out of range for K={codebook.K}")
    return idx


def vq_loss(z: Tensor, codebook: Codebook, indices) -> Tensor:
    """Codebook loss: pulls the selected raw codes toward ``sg[z]``."""
    idx = _check_indices(indices, codebook)
    return mse(stop_gradient(z), gather_rows(codebook.codes, idx))


def commit_loss(z: Tensor, codebook: Codebook, indices) -> Tensor:
    """Commitment loss: pulls ``z`` toward ``sg[e_k]``."""
    idx = _check_indices(indices, codebook)
    return mse(z, stop_gradient(gather_rows(codebook.codes, idx)))


# -- k-means ----------------------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: list  # one entry per assignment step
    n_iter: int
    converged: bool


def _kmeanspp(x, K, rng):
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, K):
        tot = d2.sum()
        if tot > 0:
            i = int(rng.choice(n, p=d2 / tot))
        else:
            i = int(rng.integers(n))
        centers.append(x[i])
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, K, rng: np.random.Generator, max_iters=100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    An empty cluster is re-seeded at the point currently farthest from its
    assigned centroid. Inertia is recorded after every assignment step, and
    the loop stops at the first assignment fixpoint.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < K:
        raise ConfigError(f"k-means needs N >= K, got N={n}, K={K}")
    centroids = _kmeanspp(x, K, rng)
    labels = np.argmin(sq_distances(x, centroids), axis=1)
    inertia = [float(np.sum((x - centroids[labels]) ** 2))]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        for j in np.flatnonzero(~filled):
            resid = np.sum((x - centroids[labels]) ** 2, axis=1)
            far = int(np.argmax(resid))
            centroids[j] = x[far]
            labels[far] = j
        new_labels = np.argmin(sq_distances(x, centroids), axis=1)
        inertia.append(float(np.sum((x - centroids[new_labels]) ** 2)))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return KMeansResult(centroids, labels, inertia, it, converged)


def kmeans_init(embeddings, K, rng: np.random.Generator, max_iters=100) -> Codebook:
    return Codebook(kmeans(embeddings, K, rng, max_iters).centroids)


# -- codebook health --------------------------------------------------------


def _require_total(hist):
    if hist.total <= 0:
        raise EmptyEvaluationError("usage histogram is empty")


def perplexity(hist: UsageHistogram) -> float:
    _require_total(hist)
    p = hist.counts[hist.counts > 0] / hist.total
    return float(np.exp(-np.sum(p * np.log(p))))


def normalized_perplexity(hist: UsageHistogram) -> float:
    return perplexity(hist) / len(hist.counts)


def utilization(hist: UsageHistogram) -> float:
    _require_total(hist)
    return float(np.count_nonzero(hist.counts)) / len(hist.counts)


def mean_pairwise_distance(codebook) -> float:
    codes = _codes(codebook)
    K = len(codes)
    if K < 2:
        raise ConfigError(f"pairwise distance needs K >= 2, got {K}")
    i, j = np.triu_indices(K, k=1)
    return float(np.mean(np.linalg.norm(codes[i] - codes[j], axis=1)))


# -- codebook CSV -----------------------------------------------------------


def save_codebook_csv(codebook, path):
    codes = _codes(codebook)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"c{d}" for d in range(codes.shape[1])])
        for row in codes:
            w.writerow([repr(float(v)) for v in row])


def load_codebook_csv(path) -> Codebook:
    path = Path(path)
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if not rows or not all(h.startswith("c") for h in rows[0]):
        raise SchemaError(f"{path}: expected header c0,c1,...")
    width = len(rows[0])
    body = rows[1:]
    if any(len(r) != width for r in body):
        raise SchemaError(f"{path}: ragged rows")
    return Codebook([[float(v) for v in r] for r in body])
