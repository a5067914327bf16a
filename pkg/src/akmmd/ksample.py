"""Pairwise MMD distances over k samples, affinity graph, spectral embedding.

Each sample contributes one histogram vector (its mean affinity to every
reference), so the whole k x k distance matrix costs one affinity pass per
sample.  The graph weights are exp(-d^2 / scale) and the embedding uses the
symmetrically normalized operator with the trivial direction projected out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import PointCloud, ReferenceSet
from .kernel import affinity_block
from .mmd import L2Statistic, SpecStatistic, StatisticKind
from .spectral import truncated_svd

__all__ = [
    "DistanceMatrix",
    "pairwise_distances",
    "affinity_graph",
    "spectral_embedding",
    "median_offdiag",
]


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric nonnegative squared-distance matrix with zero diagonal."""

    d2: np.ndarray

    def __post_init__(self):
        d2 = np.asarray(self.d2, dtype=float)
        if d2.ndim != 2 or d2.shape[0] != d2.shape[1]:
            raise ValueError("d2 must be square")
        if float(np.abs(d2 - d2.T).max()) > 1e-12:
            raise ValueError("d2 must be symmetric")
        if float(np.abs(np.diag(d2)).max()) != 0.0:
            raise ValueError("d2 must have a zero diagonal")
        if d2.min() < 0:
            raise ValueError("d2 entries must be nonnegative")
        d2.setflags(write=False)
        object.__setattr__(self, "d2", d2)

    @property
    def k(self) -> int:
        return self.d2.shape[0]


def pairwise_distances(
    samples: Sequence[PointCloud],
    refset: ReferenceSet,
    kind: StatisticKind = L2Statistic(),
) -> DistanceMatrix:
    """d2[i, j] = statistic between samples i and j under a shared refset."""
    k = len(samples)
    if k < 2:
        raise ValueError("need at least two samples")
    hists = np.stack([affinity_block(refset, s).mean(axis=1) for s in samples])  # (k, n_R)
    if isinstance(kind, SpecStatistic):
        blocks = [affinity_block(refset, s) for s in samples]
        svd = truncated_svd(np.hstack(blocks), kind.r_f)
        f = kind.filter.f[: svd.rank]
        proj = hists @ (svd.U[:, : f.size] / svd.S[: f.size])  # (k, r)
        diffs = proj[:, None, :] - proj[None, :, :]
        d2 = (diffs * diffs) @ f
    else:
        diffs = hists[:, None, :] - hists[None, :, :]
        d2 = (diffs * diffs) @ refset.weights
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    np.maximum(d2, 0.0, out=d2)
    return DistanceMatrix(d2)


def median_offdiag(D: DistanceMatrix) -> float:
    k = D.k
    mask = ~np.eye(k, dtype=bool)
    return float(np.median(D.d2[mask]))


def affinity_graph(D: DistanceMatrix, scale: float | None = None) -> np.ndarray:
    """W[i, j] = exp(-d2[i, j] / scale) off the diagonal, 0 on it.

    scale=None uses the median off-diagonal squared distance (self-tuning).
    """
    if scale is None:
        scale = median_offdiag(D)
        if scale <= 0:
            scale = 1.0
    if scale <= 0:
        raise ValueError("scale must be positive")
    W = np.exp(-D.d2 / scale)
    np.fill_diagonal(W, 0.0)
    return W


def spectral_embedding(W: np.ndarray, dim: int) -> np.ndarray:
    """Leading nontrivial eigenvector coordinates of D^-1/2 W D^-1/2.

    The stationary direction sqrt(deg) is projected out before the
    eigendecomposition, coordinates are eigenvalue-scaled random-walk
    eigenvectors (orthogonal under the degree-weighted inner product) and
    each column's largest-magnitude entry is made positive.
    """
    W = np.asarray(W, dtype=float)
    k = W.shape[0]
    if W.ndim != 2 or W.shape[1] != k:
        raise ValueError("W must be square")
    if not 1 <= dim < k:
        raise ValueError(f"dim must be in [1, {k - 1}]")
    if float(np.abs(W - W.T).max()) > 1e-12:
        raise ValueError("W must be symmetric")
    deg = W.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("graph has an isolated sample (zero degree); embedding undefined")
    inv_sqrt = 1.0 / np.sqrt(deg)
    M = W * np.outer(inv_sqrt, inv_sqrt)
    u0 = np.sqrt(deg)
    u0 = u0 / np.linalg.norm(u0)
    P = np.eye(k) - np.outer(u0, u0)
    Mt = P @ M @ P
    vals, vecs = np.linalg.eigh(0.5 * (Mt + Mt.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    coords = np.empty((k, dim))
    for ell in range(dim):
        v = vecs[:, ell] * inv_sqrt
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        coords[:, ell] = vals[ell] * v
    return coords
