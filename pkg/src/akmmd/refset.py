"""Reference-set construction: density-balanced sampling and local-PCA covariances.

References are drawn in batches from a data pool with probability
proportional to the inverse of a Gaussian KDE value, jittered, and kept only
when enough pool neighbors fall inside a radius.  Covariances come from the
second moment of the k nearest pool points about each reference, scaled by a
global sigma_tilde and floored to stay positive definite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data_model import CovarianceFactor, PointCloud, ReferenceSet, RngStream

__all__ = [
    "RefSamplingConfig",
    "LocalPcaConfig",
    "sample_reference_points",
    "estimate_covariance_field",
    "build_reference_set",
    "default_k_neighbors",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefSamplingConfig:
    """Knobs for inverse-density reference sampling.

    kde_bandwidth and radius default to multiples of the pool's median
    nearest-neighbor distance when left as None; jitter_scale is a fraction
    of that same distance (0 disables jitter).
    """

    n_r: int
    batch_size: int | None = None
    kde_bandwidth: float | None = None
    jitter_scale: float = 1.0
    min_neighbors: int = 5
    radius: float | None = None
    max_batches: int = 64

    def __post_init__(self):
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be >= 0")
        if self.kde_bandwidth is not None and self.kde_bandwidth <= 0:
            raise ValueError("kde_bandwidth must be positive")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class LocalPcaConfig:
    """Neighborhood size, global scale and eigenvalue floor for local PCA.

    reg_floor=None resolves to 1e-6 times the mean of trace(Sigma)/d over the
    references (with a tiny absolute fallback for degenerate pools).
    """

    k_neighbors: int
    scale_sigma_tilde: float = 1.0
    reg_floor: float | None = None

    def __post_init__(self):
        if self.k_neighbors < 2:
            raise ValueError("k_neighbors must be >= 2")
        if self.scale_sigma_tilde <= 0:
            raise ValueError("scale_sigma_tilde must be positive")
        if self.reg_floor is not None and self.reg_floor <= 0:
            raise ValueError("reg_floor must be positive")


def default_k_neighbors(pool_size: int) -> int:
    """Neighborhood size as a small fraction of the pool, never below 10."""
    return max(10, int(np.ceil(0.025 * pool_size)))


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def median_nn_distance(points: np.ndarray) -> float:
    """Median over points of the distance to the nearest other point."""
    if points.shape[0] < 2:
        raise ValueError("need at least 2 points")
    d2 = _pairwise_sq_dists(points, points)
    np.fill_diagonal(d2, np.inf)
    return float(np.median(np.sqrt(d2.min(axis=1))))


def _kde_values(points: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = _pairwise_sq_dists(points, points)
    # unnormalized Gaussian KDE; only relative density matters here
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth)).mean(axis=1)


def sample_reference_points(pool: PointCloud, config: RefSamplingConfig, rng: RngStream) -> np.ndarray:
    """Draw n_r jittered reference points, favoring low-density regions.

    Candidates are drawn batch by batch with probability proportional to the
    inverse KDE value, jittered by an isotropic Gaussian, and rejected when
    fewer than min_neighbors pool points fall within the radius.
    """
    pts = pool.points
    n = pool.n
    if n < config.n_r:
        raise ValueError(f"pool has {n} points but {config.n_r} references requested")
    if n < config.min_neighbors:
        raise ValueError(f"pool has {n} points, fewer than min_neighbors={config.min_neighbors}")

    med_nn = median_nn_distance(pts) if n >= 2 else 1.0
    bandwidth = config.kde_bandwidth if config.kde_bandwidth is not None else max(med_nn, 1e-12)
    radius = config.radius if config.radius is not None else 2.0 * max(med_nn, 1e-12)
    jitter_sigma = config.jitter_scale * med_nn
    batch_size = config.batch_size if config.batch_size is not None else max(4 * config.n_r, 64)
    batch_size = min(batch_size, n)

    kde = _kde_values(pts, bandwidth)
    inv = 1.0 / np.maximum(kde, 1e-300)

    gen = rng.generator()
    chosen: list[np.ndarray] = []
    used = np.zeros(n, dtype=bool)
    tried = 0
    rejected = 0
    for _ in range(config.max_batches):
        if len(chosen) >= config.n_r:
            break
        avail = np.where(~used)[0]
        if avail.size == 0:
            used[:] = False  # looping over the pool is permitted
            avail = np.arange(n)
        batch = avail if avail.size <= batch_size else gen.choice(avail, size=batch_size, replace=False)
        probs = inv[batch] / inv[batch].sum()
        take = min(config.n_r - len(chosen), batch.size)
        cand_idx = gen.choice(batch, size=take, replace=False, p=probs)
        for idx in cand_idx:
            tried += 1
            point = pts[idx].copy()
            if jitter_sigma > 0:
                point = point + gen.normal(0.0, jitter_sigma, size=pool.d)
            dist2 = ((pts - point) ** 2).sum(axis=1)
            if int((dist2 <= radius * radius).sum()) < config.min_neighbors:
                rejected += 1
                continue
            used[idx] = True
            chosen.append(point)
            if len(chosen) == config.n_r:
                break
    if len(chosen) < config.n_r:
        raise RuntimeError(
            f"reference sampling stalled: kept {len(chosen)}/{config.n_r} after "
            f"{tried} candidates ({rejected} failed the neighbor filter)"
        )
    return np.vstack(chosen)


def estimate_covariance_field(pool: PointCloud, refs, config: LocalPcaConfig) -> ReferenceSet:
    """Local-PCA covariance at each reference from its k nearest pool points.

    Sigma_r = sigma_tilde^2 * (1/k) sum_j (x_j - r)(x_j - r)^T over the k
    nearest neighbors, with eigenvalues raised to the floor.  Weights are
    uniform.
    """
    refs = np.asarray(refs, dtype=float)
    if refs.ndim != 2 or refs.shape[1] != pool.d:
        raise ValueError(f"refs must be (n_r, {pool.d}), got {refs.shape}")
    k = config.k_neighbors
    if k > pool.n:
        raise ValueError(f"k_neighbors={k} exceeds pool size {pool.n}")
    pts = pool.points
    scale2 = config.scale_sigma_tilde**2

    raw: list[np.ndarray] = []
    for r in refs:
        diffs = pts - r
        d2 = (diffs * diffs).sum(axis=1)
        nearest = np.argpartition(d2, k - 1)[:k]
        nearest = nearest[np.argsort(d2[nearest], kind="stable")]
        local = diffs[nearest]
        raw.append(scale2 * (local.T @ local) / k)

    floor = config.reg_floor
    if floor is None:
        mean_scale = float(np.mean([np.trace(m) / pool.d for m in raw]))
        floor = 1e-6 * mean_scale if mean_scale > 0 else 1e-12
    covs = [CovarianceFactor.from_matrix(m, floor=floor) for m in raw]
    return ReferenceSet.uniform(refs, covs)


def build_reference_set(
    pool: PointCloud,
    sampling: RefSamplingConfig,
    pca: LocalPcaConfig,
    rng: RngStream,
) -> ReferenceSet:
    """Sampling followed by covariance estimation, as one call."""
    refs = sample_reference_points(pool, sampling, rng)
    return estimate_covariance_field(pool, refs, pca)
