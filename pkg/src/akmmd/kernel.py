"""Asymmetric anisotropic affinity kernel and affinity-matrix assembly.

The affinity of a data point x to a reference r with covariance Sigma_r is
``exp(-0.5 (x-r)^T Sigma_r^{-1} (x-r))``: a Gaussian bin, elongated along the
leading eigenvectors of Sigma_r.  The diffusion-tensor variant measures
tensor affinities through the 6-d isometric vectorization and carries no 1/2
in the exponent; the two conventions are kept distinct on purpose.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data_model import CovarianceFactor, PointCloud, ReferenceSet

__all__ = [
    "AffinityMatrix",
    "DiffusionTensorPixel",
    "eval_affinity",
    "affinity_block",
    "build_affinity_matrix",
    "vectorize_tensor",
    "eval_tensor_affinity",
]


@dataclass(frozen=True)
class AffinityMatrix:
    """n_R x (n1+n2) affinity values; columns are the X block then the Y block."""

    values: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be 2-D")
        if self.n_x < 0 or self.n_y < 0 or self.n_x + self.n_y != vals.shape[1]:
            raise ValueError("column blocks do not add up to the column count")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_r(self) -> int:
        return self.values.shape[0]

    @property
    def x_block(self) -> np.ndarray:
        return self.values[:, : self.n_x]

    @property
    def y_block(self) -> np.ndarray:
        return self.values[:, self.n_x :]


@dataclass(frozen=True)
class DiffusionTensorPixel:
    """A pixel location together with its 3x3 symmetric PSD diffusion tensor."""

    location: np.ndarray
    tensor: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=float).reshape(-1)
        ten = np.asarray(self.tensor, dtype=float)
        if ten.shape != (3, 3):
            raise ValueError(f"tensor must be 3x3, got {ten.shape}")
        if float(np.abs(ten - ten.T).max()) > 1e-10:
            raise ValueError("tensor is not symmetric")
        if float(np.linalg.eigvalsh(ten).min()) < -1e-10:
            raise ValueError("tensor has a negative eigenvalue")
        loc.setflags(write=False)
        ten.setflags(write=False)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "tensor", ten)


def eval_affinity(ref_point, ref_cov: CovarianceFactor, x) -> float:
    """Affinity in (0, 1]; equals 1 exactly when x == r."""
    r = np.asarray(ref_point, dtype=float).reshape(-1)
    xx = np.asarray(x, dtype=float).reshape(-1)
    if r.shape != xx.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {xx.shape}")
    q = ref_cov.quad_form((xx - r)[None, :])[0]
    return float(np.exp(-0.5 * q))


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("AKMMD_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def affinity_block(refset: ReferenceSet, points, threads: int | None = None) -> np.ndarray:
    """Dense n_R x n matrix of affinities from every reference to every point.

    Row i is computed as one vectorized pass, so the result is bitwise
    independent of how rows are scheduled across threads.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != refset.d:
        raise ValueError(f"points must be (n, {refset.d}), got {pts.shape}")
    out = np.empty((refset.n_r, pts.shape[0]))

    def fill(rows: range) -> None:
        for i in rows:
            q = refset.covariances[i].quad_form(pts - refset.refs[i])
            out[i, :] = np.exp(-0.5 * q)

    n_threads = _resolve_threads(threads)
    if n_threads == 1 or refset.n_r == 1:
        fill(range(refset.n_r))
    else:
        step = -(-refset.n_r // n_threads)
        chunks = [range(s, min(s + step, refset.n_r)) for s in range(0, refset.n_r, step)]
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(fill, chunks))
    return out


def build_affinity_matrix(
    refset: ReferenceSet, X: PointCloud, Y: PointCloud, threads: int | None = None
) -> AffinityMatrix:
    """Assemble the affinity matrix over X columns followed by Y columns."""
    if X.d != refset.d or Y.d != refset.d:
        raise ValueError("sample dimension does not match reference dimension")
    pts = np.vstack([X.points, Y.points])
    return AffinityMatrix(affinity_block(refset, pts, threads=threads), n_x=X.n, n_y=Y.n)


_SQRT2 = np.sqrt(2.0)


def vectorize_tensor(tensor) -> np.ndarray:
    """Map a symmetric 3x3 tensor to the 6-vector whose Euclidean inner
    product equals the Frobenius inner product of the tensors."""
    t = np.asarray(tensor, dtype=float)
    if t.shape != (3, 3):
        raise ValueError(f"tensor must be 3x3, got {t.shape}")
    if float(np.abs(t - t.T).max()) > 1e-10:
        raise ValueError("tensor is not symmetric")
    return np.array(
        [t[0, 0], t[1, 1], t[2, 2], _SQRT2 * t[0, 1], _SQRT2 * t[0, 2], _SQRT2 * t[1, 2]]
    )


def eval_tensor_affinity(
    ref: DiffusionTensorPixel,
    ref_cov6: CovarianceFactor,
    pixel: DiffusionTensorPixel,
    locality_eps: float,
) -> float:
    """Tensor affinity gated by pixel distance.

    Returns 0 exactly when the pixel lies at distance >= locality_eps from
    the reference pixel; otherwise exp(-gamma_diff^T Sigma^{-1} gamma_diff)
    (no 1/2 in this exponent, unlike the point kernel).
    """
    if locality_eps <= 0:
        raise ValueError("locality_eps must be positive")
    if ref_cov6.d != 6:
        raise ValueError("ref_cov6 must be 6x6")
    if ref.location.shape != pixel.location.shape:
        raise ValueError("pixel coordinate dimensions differ")
    if float(np.linalg.norm(pixel.location - ref.location)) >= locality_eps:
        return 0.0
    diff = vectorize_tensor(pixel.tensor) - vectorize_tensor(ref.tensor)
    return float(np.exp(-ref_cov6.quad_form(diff[None, :])[0]))
