"""Core value types, CSV/JSON I/O and deterministic RNG streams.

All containers are immutable after construction and safe to share across
threads.  Every randomized routine in the package takes an :class:`RngStream`,
so the whole pipeline is a pure function of (inputs, master_seed).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PointCloud",
    "CovarianceFactor",
    "ReferenceSet",
    "TestResult",
    "RngStream",
    "derive_stream",
    "load_point_cloud",
    "save_point_cloud",
    "load_reference_set",
    "save_reference_set",
    "save_result",
    "load_result",
    "save_matrix_csv",
    "load_matrix_csv",
]


def _frozen_array(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointCloud:
    """An n x d matrix of sample coordinates with light metadata."""

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite entries")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class CovarianceFactor:
    """Eigen-factorized SPD matrix Q diag(eigvals) Q^T.

    Keeping the factorization (rather than the matrix) makes Mahalanobis
    forms a rotation plus a diagonal scale, and makes the regularization
    floor on the eigenvalues explicit.
    """

    eigvecs: np.ndarray  # (d, d), orthonormal columns
    eigvals: np.ndarray  # (d,), positive, nonincreasing

    def __post_init__(self):
        q = _frozen_array(self.eigvecs)
        lam = _frozen_array(self.eigvals)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"eigvecs must be square, got {q.shape}")
        if lam.shape != (q.shape[0],):
            raise ValueError("eigvals length must match dimension")
        if not np.all(lam > 0):
            raise ValueError("all eigenvalues must be strictly positive")
        object.__setattr__(self, "eigvecs", q)
        object.__setattr__(self, "eigvals", lam)

    @property
    def d(self) -> int:
        return self.eigvals.shape[0]

    @classmethod
    def from_matrix(cls, mat, floor: float) -> "CovarianceFactor":
        """Factorize a symmetric matrix, raising each eigenvalue to >= floor."""
        mat = np.asarray(mat, dtype=float)
        if floor <= 0:
            raise ValueError("floor must be positive")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"matrix must be square, got {mat.shape}")
        scale = max(1.0, float(np.abs(mat).max()))
        if float(np.abs(mat - mat.T).max()) > 1e-10 * scale:
            raise ValueError("matrix is not symmetric")
        w, q = np.linalg.eigh(0.5 * (mat + mat.T))
        w = np.maximum(w, floor)
        order = np.argsort(w)[::-1]
        return cls(eigvecs=q[:, order], eigvals=w[order])

    def quad_form(self, diffs: np.ndarray) -> np.ndarray:
        """(x-r)^T Sigma^{-1} (x-r) for each row of diffs, shape (n, d) -> (n,)."""
        diffs = np.atleast_2d(np.asarray(diffs, dtype=float))
        if diffs.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: {diffs.shape[1]} != {self.d}")
        u = diffs @ self.eigvecs
        return np.einsum("ij,ij->i", u, u / self.eigvals)

    def matrix(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


@dataclass(frozen=True)
class ReferenceSet:
    """Reference points with per-point SPD covariances and weights.

    Weights are a probability vector over the references (the discrete
    reference measure); uniform 1/n_R unless constructed otherwise.
    """

    refs: np.ndarray  # (n_R, d)
    covariances: tuple[CovarianceFactor, ...]
    weights: np.ndarray  # (n_R,), nonnegative, sums to 1

    def __post_init__(self):
        refs = _frozen_array(self.refs)
        w = _frozen_array(self.weights)
        covs = tuple(self.covariances)
        if refs.ndim != 2:
            raise ValueError("refs must be 2-D")
        n_r, d = refs.shape
        if len(covs) != n_r:
            raise ValueError(f"{len(covs)} covariances for {n_r} references")
        for c in covs:
            if c.d != d:
                raise ValueError("covariance dimension does not match refs")
        if w.shape != (n_r,):
            raise ValueError("weights length must equal number of references")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if not np.all(np.isfinite(refs)):
            raise ValueError("refs contain non-finite entries")
        object.__setattr__(self, "refs", refs)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "weights", w)

    @property
    def n_r(self) -> int:
        return self.refs.shape[0]

    @property
    def d(self) -> int:
        return self.refs.shape[1]

    @classmethod
    def uniform(cls, refs, covariances) -> "ReferenceSet":
        refs = np.asarray(refs, dtype=float)
        n_r = refs.shape[0]
        return cls(refs=refs, covariances=tuple(covariances), weights=np.full(n_r, 1.0 / n_r))


@dataclass(frozen=True)
class TestResult:
    """Outcome of one two-sample test with its permutation null."""

    statistic: float
    null_samples: np.ndarray
    threshold_t_alpha: float
    p_value: float
    reject: bool
    alpha: float
    seed: int

    def __post_init__(self):
        ns = _frozen_array(self.null_samples)
        if ns.ndim != 1:
            raise ValueError("null_samples must be 1-D")
        object.__setattr__(self, "null_samples", ns)
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value out of [0,1]: {self.p_value}")
        if bool(self.reject) != (self.statistic > self.threshold_t_alpha):
            raise ValueError("reject flag inconsistent with statistic vs threshold")

    @property
    def n_boot(self) -> int:
        return self.null_samples.shape[0]


@dataclass(frozen=True)
class RngStream:
    """Deterministic, hierarchical random stream.

    (master_seed, stream_id) fully determines the sequence; distinct ids give
    statistically independent streams.  ``child(i)`` derives a sub-stream for
    task i, so parallel and serial execution see identical randomness.
    """

    master_seed: int
    stream_id: int
    substream: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(int(s) for s in self.substream)
        return np.random.default_rng(np.random.SeedSequence(int(self.master_seed), spawn_key=key))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.substream + (int(index),))


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    return RngStream(int(master_seed), int(stream_id))


# ---------------------------------------------------------------------------
# CSV / JSON interchange
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips the double exactly
    return repr(float(x))


def load_matrix_csv(path, delimiter: str = ",", skip_header: bool = False) -> np.ndarray:
    """Parse a numeric CSV into a 2-D array; errors name the offending row."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    rows: list[list[float]] = []
    linenos: list[int] = []
    width = None
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter)
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(f"{p}: row {lineno}: expected {width} fields, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ValueError(f"{p}: row {lineno}: non-numeric field") from None
            linenos.append(lineno)
    if not rows:
        raise ValueError(f"{p}: no rows")
    arr = np.asarray(rows, dtype=float)
    bad = np.where(~np.isfinite(arr).all(axis=1))[0]
    if bad.size:
        raise ValueError(f"{p}: row {linenos[bad[0]]}: non-finite value")
    return arr


def save_matrix_csv(arr, path, delimiter: str = ",") -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(delimiter.join(_fmt(v) for v in row))
            fh.write("\n")


def load_point_cloud(path, delimiter: str = ",", skip_header: bool = False, label: str = "") -> PointCloud:
    return PointCloud(load_matrix_csv(path, delimiter, skip_header), label=label)


def save_point_cloud(cloud: PointCloud, path, delimiter: str = ",") -> None:
    save_matrix_csv(cloud.points, path, delimiter)


def save_reference_set(refset: ReferenceSet, refs_path, covs_path, delimiter: str = ",") -> None:
    """Two aligned CSVs: points, and covariances as d*d row-major columns."""
    save_matrix_csv(refset.refs, refs_path, delimiter)
    flat = np.stack([c.matrix().reshape(-1) for c in refset.covariances])
    save_matrix_csv(flat, covs_path, delimiter)


def load_reference_set(refs_path, covs_path, delimiter: str = ",", reg_floor: float | None = None) -> ReferenceSet:
    """Load the two aligned CSVs written by :func:`save_reference_set`.

    Weights are uniform.  With ``reg_floor=None`` the stored covariances must
    already be positive definite; otherwise eigenvalues are floored.
    """
    refs = load_matrix_csv(refs_path, delimiter)
    flat = load_matrix_csv(covs_path, delimiter)
    n_r, d = refs.shape
    if flat.shape != (n_r, d * d):
        raise ValueError(f"covariance CSV must be {n_r} x {d * d}, got {flat.shape}")
    covs = []
    for i in range(n_r):
        mat = flat[i].reshape(d, d)
        if reg_floor is None:
            w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
            if w.min() <= 0:
                raise ValueError(f"covariance row {i + 1} is not positive definite; pass reg_floor")
            covs.append(CovarianceFactor.from_matrix(mat, floor=float(w.min())))
        else:
            covs.append(CovarianceFactor.from_matrix(mat, floor=reg_floor))
    return ReferenceSet.uniform(refs, covs)


def save_result(result: TestResult, path) -> None:
    doc = {
        "statistic": float(result.statistic),
        "p_value": float(result.p_value),
        "threshold": float(result.threshold_t_alpha),
        "reject": bool(result.reject),
        "alpha": float(result.alpha),
        "n_boot": int(result.n_boot),
        "seed": int(result.seed),
        "null_samples": [float(v) for v in result.null_samples],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_result(path) -> TestResult:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return TestResult(
        statistic=doc["statistic"],
        null_samples=np.asarray(doc["null_samples"], dtype=float),
        threshold_t_alpha=doc["threshold"],
        p_value=doc["p_value"],
        reject=doc["reject"],
        alpha=doc["alpha"],
        seed=doc["seed"],
    )
