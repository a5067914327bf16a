"""Truncated SVD of the affinity matrix and spectral filter constructors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data_model import load_matrix_csv, save_matrix_csv
from .kernel import AffinityMatrix

__all__ = [
    "SvdTriple",
    "SpectralFilter",
    "truncated_svd",
    "diffusion_filter",
    "bandpass_filter",
    "save_filter",
    "load_filter",
]

# singular values below this fraction of S[0] are treated as numerically zero
RANK_DROP_REL = 1e-12


@dataclass(frozen=True)
class SvdTriple:
    """Best rank-r_f factors U S V^T of an n_R x n affinity matrix."""

    U: np.ndarray  # (n_R, r_f)
    S: np.ndarray  # (r_f,), positive, nonincreasing
    V: np.ndarray  # (n, r_f)

    def __post_init__(self):
        u = np.asarray(self.U, dtype=float)
        s = np.asarray(self.S, dtype=float)
        v = np.asarray(self.V, dtype=float)
        if s.ndim != 1 or u.shape[1] != s.shape[0] or v.shape[1] != s.shape[0]:
            raise ValueError("inconsistent factor shapes")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValueError("singular values must be positive and nonincreasing")
        for m in (u, s, v):
            m.setflags(write=False)
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "S", s)
        object.__setattr__(self, "V", v)

    @property
    def rank(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class SpectralFilter:
    """Nonnegative weights applied to squared right-singular projections."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("filter must be a nonempty vector")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("filter entries must be finite and >= 0")
        if not np.any(f > 0):
            raise ValueError("filter must have at least one positive entry")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    def __len__(self) -> int:
        return self.f.shape[0]


def truncated_svd(A, r_f: int) -> SvdTriple:
    """Deterministic thin SVD truncated to rank r_f.

    Sign convention: the largest-magnitude entry of each U column is
    positive.  Singular values below RANK_DROP_REL * S[0] are dropped with a
    warning, shrinking the rank.
    """
    M = A.values if isinstance(A, AffinityMatrix) else np.asarray(A, dtype=float)
    if M.ndim != 2:
        raise ValueError("input must be a matrix")
    max_rank = min(M.shape)
    if not 1 <= r_f <= max_rank:
        raise ValueError(f"r_f must be in [1, {max_rank}], got {r_f}")
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    keep = int(np.sum(s > RANK_DROP_REL * s[0]))
    if keep < r_f:
        warnings.warn(
            f"rank truncated from {r_f} to {keep}: singular values below "
            f"{RANK_DROP_REL:.0e} * S[0] dropped",
            stacklevel=2,
        )
        r_f = max(keep, 1)
    u, s, v = u[:, :r_f], s[:r_f], vt[:r_f].T
    for k in range(r_f):
        j = int(np.argmax(np.abs(u[:, k])))
        if u[j, k] < 0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]
    return SvdTriple(U=u, S=s, V=v)


def diffusion_filter(S, m: int, n_r: int) -> SpectralFilter:
    """f_k = (S_k^2 / n_R)^(m+1); m = 0 reproduces the plain L2 weighting."""
    s = np.asarray(S, dtype=float)
    if np.any(s <= 0):
        raise ValueError("singular values must be positive")
    if m < 0:
        raise ValueError("m must be >= 0")
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    return SpectralFilter((s * s / n_r) ** (m + 1))


def bandpass_filter(r_pass: int, r_cut: int) -> SpectralFilter:
    """Flat-then-taper filter: 1 up to r_pass, raised-cosine decay to r_cut.

    f_k = cos^2(pi/2 * (k - r_pass)/(r_cut - r_pass)) on the taper, reaching
    0 exactly at k = r_cut (the filter keeps length r_cut).
    """
    if not 1 <= r_pass <= r_cut:
        raise ValueError(f"need 1 <= r_pass <= r_cut, got ({r_pass}, {r_cut})")
    k = np.arange(1, r_cut + 1, dtype=float)
    f = np.ones(r_cut)
    if r_cut > r_pass:
        taper = k > r_pass
        f[taper] = np.cos(0.5 * np.pi * (k[taper] - r_pass) / (r_cut - r_pass)) ** 2
    return SpectralFilter(f)


def save_filter(filt: SpectralFilter, path) -> None:
    save_matrix_csv(filt.f[:, None], path)


def load_filter(path) -> SpectralFilter:
    arr = load_matrix_csv(path)
    if arr.shape[1] != 1:
        raise ValueError(f"filter CSV must have a single column, got {arr.shape[1]}")
    return SpectralFilter(arr[:, 0])
