"""MMD statistics, permutation nulls and the two-sample test.

Two statistics are provided.  The L2 statistic is the weighted sum of squared
histogram gaps over the references and equals the (biased, V-statistic) RKHS
MMD^2 with kernel k(x, y) = sum_r w_r a(r, x) a(r, y).  The spectral statistic
filters the squared gaps of the right-singular projections of the affinity
matrix; with filter S^2/n_R at full rank it coincides with the L2 statistic.

The permutation null relabels pooled columns (L2) or rows of the
once-computed V factor (spectral); trial b draws its permutation from the
child stream with index b, so results never depend on execution order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import PointCloud, ReferenceSet, RngStream, TestResult
from .kernel import AffinityMatrix, build_affinity_matrix
from .spectral import SpectralFilter, SvdTriple, truncated_svd

__all__ = [
    "L2Statistic",
    "SpecStatistic",
    "StatisticKind",
    "mmd_l2",
    "mmd_spec",
    "permutation_null",
    "test_from_affinity",
    "two_sample_test",
    "threshold_from_null",
    "p_value_from_null",
    "gaussian_gram",
    "gaussian_mmd2",
    "gaussian_two_sample_test",
]

_BOOT_CHUNK = 256


@dataclass(frozen=True)
class L2Statistic:
    """Plain weighted histogram-gap statistic."""


@dataclass(frozen=True)
class SpecStatistic:
    """Spectrally filtered statistic at SVD rank r_f."""

    filter: SpectralFilter
    r_f: int

    def __post_init__(self):
        if self.r_f < 1:
            raise ValueError("r_f must be >= 1")
        if len(self.filter) > self.r_f:
            raise ValueError("filter longer than the SVD rank")


StatisticKind = L2Statistic | SpecStatistic


def _weights(A: AffinityMatrix, weights) -> np.ndarray:
    if weights is None:
        return np.full(A.n_r, 1.0 / A.n_r)
    w = np.asarray(weights, dtype=float)
    if w.shape != (A.n_r,):
        raise ValueError(f"weights must have length {A.n_r}")
    return w


def mmd_l2(A: AffinityMatrix, weights=None) -> float:
    """sum_r w_r (hhat_X(r) - hhat_Y(r))^2, uniform w_r by default."""
    if A.n_x == 0 or A.n_y == 0:
        raise ValueError("both column blocks must be nonempty")
    w = _weights(A, weights)
    gap = A.x_block.mean(axis=1) - A.y_block.mean(axis=1)
    return float(w @ (gap * gap))


def mmd_spec(svd: SvdTriple, n1: int, n2: int, filt: SpectralFilter) -> float:
    """Filtered squared gap between block means of the V rows."""
    if n1 + n2 != svd.V.shape[0]:
        raise ValueError(f"n1+n2={n1 + n2} does not match V rows {svd.V.shape[0]}")
    if n1 == 0 or n2 == 0:
        raise ValueError("both blocks must be nonempty")
    k = len(filt)
    if k > svd.rank:
        raise ValueError(f"filter length {k} exceeds SVD rank {svd.rank}")
    v_x = svd.V[:n1, :k].mean(axis=0)
    v_y = svd.V[n1:, :k].mean(axis=0)
    gap = v_x - v_y
    return float(filt.f @ (gap * gap))


def _label_vectors(n1: int, n2: int, n_boot: int, rng: RngStream) -> np.ndarray:
    """Columns hold +1/n1 on permuted-X positions and -1/n2 on permuted-Y ones."""
    n = n1 + n2
    W = np.empty((n, n_boot))
    for b in range(n_boot):
        perm = rng.child(b).generator().permutation(n)
        col = np.empty(n)
        col[perm[:n1]] = 1.0 / n1
        col[perm[n1:]] = -1.0 / n2
        W[:, b] = col
    return W


def _null_l2(A: AffinityMatrix, weights, n_boot: int, rng: RngStream) -> np.ndarray:
    w = _weights(A, weights)
    out = np.empty(n_boot)
    for start in range(0, n_boot, _BOOT_CHUNK):
        stop = min(start + _BOOT_CHUNK, n_boot)
        labels = _label_vectors(A.n_x, A.n_y, stop - start, _OffsetStream(rng, start))
        gaps = A.values @ labels  # (n_R, chunk)
        out[start:stop] = w @ (gaps * gaps)
    return out


def _null_spec(svd: SvdTriple, n1: int, n2: int, filt: SpectralFilter, n_boot: int, rng: RngStream) -> np.ndarray:
    k = len(filt)
    out = np.empty(n_boot)
    for start in range(0, n_boot, _BOOT_CHUNK):
        stop = min(start + _BOOT_CHUNK, n_boot)
        labels = _label_vectors(n1, n2, stop - start, _OffsetStream(rng, start))
        gaps = svd.V[:, :k].T @ labels  # (k, chunk)
        out[start:stop] = filt.f @ (gaps * gaps)
    return out


class _OffsetStream:
    """Shifts child indices so chunked trial b still uses rng.child(b)."""

    def __init__(self, base: RngStream, offset: int):
        self._base = base
        self._offset = offset

    def child(self, index: int) -> RngStream:
        return self._base.child(self._offset + index)


def permutation_null(
    A: AffinityMatrix,
    kind: StatisticKind,
    n_boot: int,
    rng: RngStream,
    weights=None,
) -> np.ndarray:
    """n_boot draws of the statistic under permuted column labels.

    For the spectral statistic the SVD is computed once and only the rows of
    V are relabeled per trial.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if isinstance(kind, L2Statistic):
        return _null_l2(A, weights, n_boot, rng)
    svd = truncated_svd(A, kind.r_f)
    return _null_spec(svd, A.n_x, A.n_y, kind.filter, n_boot, rng)


def threshold_from_null(null_samples: np.ndarray, alpha: float) -> float:
    """Smallest null order statistic with rank >= ceil((1-alpha) * n_boot)."""
    n_boot = null_samples.shape[0]
    rank = int(np.ceil((1.0 - alpha) * n_boot))
    rank = min(max(rank, 1), n_boot)
    return float(np.sort(null_samples)[rank - 1])


def p_value_from_null(statistic: float, null_samples: np.ndarray) -> float:
    """Add-one permutation p-value: (1 + #{null >= T}) / (n_boot + 1)."""
    n_boot = null_samples.shape[0]
    return float((1 + int((null_samples >= statistic).sum())) / (n_boot + 1))


def test_from_affinity(
    A: AffinityMatrix,
    kind: StatisticKind,
    alpha: float,
    n_boot: int,
    rng: RngStream,
    weights=None,
) -> TestResult:
    """Statistic, permutation null and decision from a prebuilt affinity matrix."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if isinstance(kind, L2Statistic):
        stat = mmd_l2(A, weights)
        null = _null_l2(A, weights, n_boot, rng)
    else:
        svd = truncated_svd(A, kind.r_f)
        filt = kind.filter
        if len(filt) > svd.rank:  # rank was shrunk; truncated_svd already warned
            filt = SpectralFilter(filt.f[: svd.rank])
        stat = mmd_spec(svd, A.n_x, A.n_y, filt)
        null = _null_spec(svd, A.n_x, A.n_y, filt, n_boot, rng)
    t_alpha = threshold_from_null(null, alpha)
    return TestResult(
        statistic=stat,
        null_samples=null,
        threshold_t_alpha=t_alpha,
        p_value=p_value_from_null(stat, null),
        reject=stat > t_alpha,
        alpha=alpha,
        seed=rng.master_seed,
    )


def two_sample_test(
    X: PointCloud,
    Y: PointCloud,
    refset: ReferenceSet,
    kind: StatisticKind,
    alpha: float,
    n_boot: int,
    rng: RngStream,
    threads: int | None = None,
) -> TestResult:
    """Permutation-calibrated two-sample test with the chosen statistic."""
    A = build_affinity_matrix(refset, X, Y, threads=threads)
    return test_from_affinity(A, kind, alpha, n_boot, rng, weights=refset.weights)


# ---------------------------------------------------------------------------
# Isotropic Gaussian-kernel MMD (the symmetric-kernel baseline)
# ---------------------------------------------------------------------------

def gaussian_gram(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    """exp(-||x - y||^2 / (2 bandwidth^2)) for all row pairs."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


def gaussian_mmd2(X: PointCloud, Y: PointCloud, bandwidth: float) -> float:
    """Biased (V-statistic) Gaussian-kernel MMD^2, diagonal terms included."""
    kxx = gaussian_gram(X.points, X.points, bandwidth).mean()
    kyy = gaussian_gram(Y.points, Y.points, bandwidth).mean()
    kxy = gaussian_gram(X.points, Y.points, bandwidth).mean()
    return float(kxx + kyy - 2.0 * kxy)


def gaussian_two_sample_test(
    X: PointCloud,
    Y: PointCloud,
    bandwidth: float,
    alpha: float,
    n_boot: int,
    rng: RngStream,
) -> TestResult:
    """Permutation test for the symmetric Gaussian kernel (pooled Gram reused)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    pool = np.vstack([X.points, Y.points])
    K = gaussian_gram(pool, pool, bandwidth)
    w0 = np.concatenate([np.full(X.n, 1.0 / X.n), np.full(Y.n, -1.0 / Y.n)])
    stat = float(w0 @ (K @ w0))
    null = np.empty(n_boot)
    for start in range(0, n_boot, _BOOT_CHUNK):
        stop = min(start + _BOOT_CHUNK, n_boot)
        labels = _label_vectors(X.n, Y.n, stop - start, _OffsetStream(rng, start))
        null[start:stop] = np.einsum("ij,ij->j", labels, K @ labels)
    t_alpha = threshold_from_null(null, alpha)
    return TestResult(
        statistic=stat,
        null_samples=null,
        threshold_t_alpha=t_alpha,
        p_value=p_value_from_null(stat, null),
        reject=stat > t_alpha,
        alpha=alpha,
        seed=rng.master_seed,
    )
