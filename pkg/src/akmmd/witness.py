"""Empirical witness functions evaluated at arbitrary query points.

The witness is the mean-embedding difference of the two samples; its mean
over the X block minus its mean over the Y block reproduces the statistic
exactly, which the tests assert as an algebraic identity.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data_model import PointCloud, ReferenceSet
from .kernel import affinity_block
from .mmd import SpecStatistic, StatisticKind
from .spectral import RANK_DROP_REL, SpectralFilter, SvdTriple

__all__ = ["WitnessEvaluation", "witness_l2", "witness_spec"]


@dataclass(frozen=True)
class WitnessEvaluation:
    query_points: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        q = np.asarray(self.query_points, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if q.shape[0] != v.shape[0]:
            raise ValueError("one value per query point required")
        if not np.all(np.isfinite(v)):
            raise ValueError("witness values must be finite")
        q.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "query_points", q)
        object.__setattr__(self, "values", v)


def _as_points(Z) -> np.ndarray:
    return Z.points if isinstance(Z, PointCloud) else np.asarray(Z, dtype=float)


def witness_l2(A_X: np.ndarray, A_Y: np.ndarray, refset: ReferenceSet, Z) -> WitnessEvaluation:
    """w(z) = sum_r w_r a(r, z) (hhat_X(r) - hhat_Y(r))."""
    A_X = np.asarray(A_X, dtype=float)
    A_Y = np.asarray(A_Y, dtype=float)
    if A_X.shape[0] != refset.n_r or A_Y.shape[0] != refset.n_r:
        raise ValueError("affinity blocks must have one row per reference")
    gap = A_X.mean(axis=1) - A_Y.mean(axis=1)
    pts = _as_points(Z)
    A_Z = affinity_block(refset, pts)
    values = A_Z.T @ (refset.weights * gap)
    return WitnessEvaluation(query_points=pts, values=values, kind="l2")


def witness_spec(
    svd: SvdTriple,
    n1: int,
    n2: int,
    filt: SpectralFilter,
    refset: ReferenceSet,
    Z,
) -> WitnessEvaluation:
    """Filtered witness via the out-of-sample extension V_Z = S^{-1} U^T A_Z.

    Modes whose singular value falls below RANK_DROP_REL * S[0] would blow up
    the extension and are dropped with a warning.
    """
    if n1 + n2 != svd.V.shape[0]:
        raise ValueError("n1 + n2 must match the V factor rows")
    k = len(filt)
    if k > svd.rank:
        raise ValueError(f"filter length {k} exceeds SVD rank {svd.rank}")
    stable = int(np.sum(svd.S > RANK_DROP_REL * svd.S[0]))
    if stable < k:
        warnings.warn(f"dropping {k - stable} unstable witness modes", stacklevel=2)
        k = max(stable, 1)
    pts = _as_points(Z)
    A_Z = affinity_block(refset, pts)
    V_Z = A_Z.T @ (svd.U[:, :k] / svd.S[:k])  # (n_Z, k)
    v_x = svd.V[:n1, :k].mean(axis=0)
    v_y = svd.V[n1:, :k].mean(axis=0)
    values = V_Z @ (filt.f[:k] * (v_x - v_y))
    return WitnessEvaluation(query_points=pts, values=values, kind="spec")


def witness_for_kind(
    kind: StatisticKind,
    A_X: np.ndarray,
    A_Y: np.ndarray,
    refset: ReferenceSet,
    Z,
) -> WitnessEvaluation:
    """Dispatch helper used by the CLI."""
    if isinstance(kind, SpecStatistic):
        from .spectral import truncated_svd

        A = np.hstack([np.asarray(A_X, float), np.asarray(A_Y, float)])
        svd = truncated_svd(A, kind.r_f)
        filt = kind.filter
        if len(filt) > svd.rank:
            filt = SpectralFilter(filt.f[: svd.rank])
        return witness_spec(svd, A_X.shape[1], A_Y.shape[1], filt, refset, Z)
    return witness_l2(A_X, A_Y, refset, Z)
