"""Executable power theory for the reference-kernel MMD statistics.

Estimates the spectrum (eigenvalues and departure projections) of the
centered symmetric kernel implied by a statistic, draws from the limiting
distributions of n * T_n in the different departure regimes, evaluates the
non-asymptotic lower bound on testing power, and runs the Monte-Carlo
kernel-comparison harness (mean/std of the statistic under both hypotheses
against their limit-based approximations).

Normalization conventions
-------------------------
``normalize="unit_top"`` rescales the kernel so the top centered eigenvalue
is 1, which makes different kernels comparable; ``normalize="native"`` keeps
the kernel's own scale (spectral filters are then pre-scaled so the implied
kernel satisfies the trace-class bounds the power bound relies on).  The
returned spectrum records the multiplier that converts a raw statistic into
the units of the normalized kernel; for spectrally filtered statistics that
multiplier carries an extra factor of the pooled sample size, because the
empirical statistic absorbs 1/n through the SVD of the affinity matrix.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data_model import PointCloud, ReferenceSet, RngStream
from .kernel import affinity_block, build_affinity_matrix
from .mmd import L2Statistic, SpecStatistic, gaussian_gram, gaussian_mmd2, mmd_l2, mmd_spec
from .spectral import truncated_svd
from .synthetic import Sampler, mixture_of

__all__ = [
    "GaussianKernelSpec",
    "ComparisonKind",
    "LimitSpectrum",
    "NullRegime",
    "CriticalRegime",
    "IntermediateRegime",
    "FixedRegime",
    "PowerBoundReport",
    "ComparisonReport",
    "estimate_centered_spectrum",
    "limit_distribution",
    "power_lower_bound",
    "kernel_comparison",
    "statistic_for_kind",
    "kind_label",
]

log = logging.getLogger(__name__)

_DRAW_CHUNK = 8192
_MODE_DROP_REL = 1e-12


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Isotropic Gaussian kernel baseline for comparisons."""

    bandwidth: float

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


ComparisonKind = L2Statistic | SpecStatistic | GaussianKernelSpec


def kind_label(kind: ComparisonKind) -> str:
    if isinstance(kind, GaussianKernelSpec):
        return "gaussian"
    if isinstance(kind, SpecStatistic):
        return "spec"
    return "l2"


@dataclass(frozen=True)
class LimitSpectrum:
    """Centered-kernel eigenvalues, departure projections and bookkeeping.

    lambdas are nonincreasing and nonnegative (negative finite-sample
    eigenvalues are clipped); cs[k] is the mean of the k-th centered
    eigenfunction under the alternative law.  ``scale`` converts a raw
    statistic to the normalized kernel's units; when per_sample_scale is
    set the conversion also multiplies by the pooled sample size.
    """

    lambdas: np.ndarray
    cs: np.ndarray
    cross_moments: np.ndarray | None
    rho1: float
    K: int
    scale: float = 1.0
    per_sample_scale: bool = False
    clipped: int = 0
    normalization: str = "unit_top"

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        cs = np.asarray(self.cs, dtype=float)
        if lam.shape != cs.shape or lam.ndim != 1:
            raise ValueError("lambdas and cs must be 1-D of equal length")
        if np.any(lam < -1e-8):
            raise ValueError("eigenvalues must be clipped to >= 0")
        if np.any(np.diff(lam) > 1e-12):
            raise ValueError("eigenvalues must be nonincreasing")
        if not 0.0 < self.rho1 < 1.0:
            raise ValueError("rho1 must be in (0, 1)")
        if self.cross_moments is not None:
            s = np.asarray(self.cross_moments, dtype=float)
            if s.shape != (lam.size, lam.size):
                raise ValueError("cross_moments must be K x K")
            s.setflags(write=False)
            object.__setattr__(self, "cross_moments", s)
        lam = np.maximum(lam, 0.0)
        lam.setflags(write=False)
        cs.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "cs", cs)

    @property
    def rho2(self) -> float:
        return 1.0 - self.rho1

    def statistic_multiplier(self, n_total: int) -> float:
        """Factor turning a raw statistic into normalized-kernel units."""
        return self.scale * (float(n_total) if self.per_sample_scale else 1.0)


@dataclass(frozen=True)
class NullRegime:
    pass


@dataclass(frozen=True)
class CriticalRegime:
    a: float


@dataclass(frozen=True)
class IntermediateRegime:
    n: int
    delta: float


@dataclass(frozen=True)
class FixedRegime:
    n: int


Regime = NullRegime | CriticalRegime | IntermediateRegime | FixedRegime


# ---------------------------------------------------------------------------
# Kernel models fixed from a training sample
# ---------------------------------------------------------------------------

class _DenseKernelModel:
    """k given by a dense Gram matrix on the p-sample plus cross evaluation."""

    per_sample_scale = False

    def __init__(self, gram: np.ndarray, cross: Callable[[np.ndarray], np.ndarray]):
        self._K = gram
        self._cross = cross
        self._kp = gram.mean(axis=1)
        self._kpp = float(self._kp.mean())

    @property
    def m(self) -> int:
        return self._K.shape[0]

    def centered_eigs(self) -> tuple[np.ndarray, np.ndarray]:
        K = self._K
        Kc = K - self._kp[:, None] - self._kp[None, :] + self._kpp
        vals, vecs = np.linalg.eigh(Kc / self.m)
        order = np.argsort(vals)[::-1]
        return vals[order], vecs[:, order]

    def centered_cross_times(self, Z: np.ndarray, U: np.ndarray) -> np.ndarray:
        """(ktilde(z, .) @ U) for each z; U holds eigenvectors as columns."""
        K_Z = self._cross(Z)
        kp_z = K_Z.mean(axis=1)
        col_sums = U.sum(axis=0)
        return K_Z @ U - np.outer(kp_z, col_sums) - (self._kp @ U)[None, :] + self._kpp * col_sums[None, :]


class _FactoredKernelModel:
    """k = L L^T with a factor map for new points; avoids m x m matrices."""

    def __init__(self, L: np.ndarray, factor_of: Callable[[np.ndarray], np.ndarray], per_sample_scale: bool):
        self._L = L
        self._factor_of = factor_of
        self.per_sample_scale = per_sample_scale
        self._col_means = L.mean(axis=0)  # L^T 1 / m
        self._kp = L @ self._col_means
        self._kpp = float(self._kp.mean())

    @property
    def m(self) -> int:
        return self._L.shape[0]

    def centered_eigs(self) -> tuple[np.ndarray, np.ndarray]:
        Lc = self._L - self._col_means[None, :]
        u, s, _ = np.linalg.svd(Lc / np.sqrt(self.m), full_matrices=False)
        return s * s, u

    def centered_cross_times(self, Z: np.ndarray, U: np.ndarray) -> np.ndarray:
        L_Z = self._factor_of(Z)
        kp_z = L_Z @ self._col_means
        col_sums = U.sum(axis=0)
        core = L_Z @ (self._L.T @ U)
        return core - np.outer(kp_z, col_sums) - (self._kp @ U)[None, :] + self._kpp * col_sums[None, :]


def _build_model(kind: ComparisonKind, refset: ReferenceSet | None, P: np.ndarray, normalize: str):
    """Returns (model, prescale) where prescale rescales the implied kernel."""
    if isinstance(kind, GaussianKernelSpec):
        gram = gaussian_gram(P, P, kind.bandwidth)
        return _DenseKernelModel(gram, lambda Z: gaussian_gram(Z, P, kind.bandwidth)), 1.0
    if refset is None:
        raise ValueError("reference-kernel kinds require a reference set")
    A_P = affinity_block(refset, P)
    sqrt_w = np.sqrt(refset.weights)
    if isinstance(kind, L2Statistic):
        L = (sqrt_w[:, None] * A_P).T

        def factor_of(Z: np.ndarray) -> np.ndarray:
            return (sqrt_w[:, None] * affinity_block(refset, Z)).T

        return _FactoredKernelModel(L, factor_of, per_sample_scale=False), 1.0
    if isinstance(kind, SpecStatistic):
        svd = truncated_svd(A_P, kind.r_f)
        f = kind.filter.f[: svd.rank]
        m = P.shape[0]
        prescale = 1.0
        if normalize == "native":
            diag = m * (svd.V[:, : f.size] ** 2) @ f
            prescale = 1.0 / max(float(f.sum()), float(diag.max()), 1.0)
        g = np.sqrt(m * f * prescale)
        L = svd.V[:, : f.size] * g[None, :]
        u_over_s = svd.U[:, : f.size] / svd.S[: f.size]

        def factor_of(Z: np.ndarray) -> np.ndarray:
            v_z = affinity_block(refset, Z).T @ u_over_s
            return v_z * g[None, :]

        return _FactoredKernelModel(L, factor_of, per_sample_scale=True), prescale
    raise TypeError(f"unsupported kind: {kind!r}")


def estimate_centered_spectrum(
    kind: ComparisonKind,
    refset: ReferenceSet | None,
    p_sampler: Sampler,
    q_sampler: Sampler,
    m_points: int,
    rho1: float,
    K: int,
    rng: RngStream,
    normalize: str = "unit_top",
    compute_cross: bool = False,
) -> LimitSpectrum:
    """Empirical centered-kernel spectrum from m_points draws of p.

    Eigenpairs come from the doubly centered Gram matrix; eigenfunctions are
    normalized to unit empirical p-norm.  The departure projections cs are
    means of the Nystrom-extended eigenfunctions over fresh draws from q
    (their p-means vanish by centering).  Negative eigenvalues are clipped
    with a logged count; K shrinks to the usable rank with a warning.
    """
    if normalize not in ("unit_top", "native"):
        raise ValueError("normalize must be 'unit_top' or 'native'")
    if m_points < 2:
        raise ValueError("m_points must be >= 2")
    if K < 1:
        raise ValueError("K must be >= 1")
    P = np.asarray(p_sampler(m_points, rng.child(0).generator()), dtype=float)
    Q = np.asarray(q_sampler(m_points, rng.child(1).generator()), dtype=float)
    model, prescale = _build_model(kind, refset, P, normalize)

    vals, vecs = model.centered_eigs()
    clipped = int((vals < 0).sum())
    vals = np.maximum(vals, 0.0)
    usable = int((vals > _MODE_DROP_REL * max(vals[0], 1e-300)).sum())
    if usable == 0:
        raise ValueError("centered kernel has no positive eigenvalues")
    k_eff = min(K, usable)
    if k_eff < K:
        warnings.warn(f"spectrum truncation shrunk from K={K} to {k_eff} usable modes", stacklevel=2)
    lam_raw = vals[:k_eff]
    U = vecs[:, :k_eff]

    # Nystrom extension of the centered eigenfunctions to the q-draws:
    # psi_k(z) = ktilde(z, .) @ u_k / (lambda_k * sqrt(m))
    m = model.m
    psi_q = model.centered_cross_times(Q, U) / (lam_raw[None, :] * np.sqrt(m))
    cs = psi_q.mean(axis=0)
    cross = None
    if compute_cross:
        cross = psi_q.T @ psi_q / psi_q.shape[0] - np.outer(cs, cs)

    if clipped:
        log.info("clipped %d negative eigenvalues of the centered kernel", clipped)

    if normalize == "unit_top":
        norm_scale = 1.0 / lam_raw[0]
        lam = lam_raw * norm_scale
    else:
        norm_scale = 1.0
        lam = lam_raw
    return LimitSpectrum(
        lambdas=lam,
        cs=cs,
        cross_moments=cross,
        rho1=rho1,
        K=k_eff,
        scale=norm_scale * prescale,
        per_sample_scale=model.per_sample_scale,
        clipped=clipped,
        normalization=normalize,
    )


def limit_distribution(
    spectrum: LimitSpectrum,
    regime: Regime,
    n_draws: int,
    rng: RngStream,
) -> np.ndarray:
    """Samples of the limiting law for the given departure regime.

    Null and Critical(a) sample sum_k lambda_k (-a c_k + xi_k)^2 with
    xi_k ~ N(0, 1/rho1 + 1/rho2) i.i.d. (the law of the n-scaled statistic);
    Intermediate samples N(0, sigma2^2) and Fixed samples N(0, sigma3^2),
    the centered-and-scaled limits for those regimes.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    lam, cs = spectrum.lambdas, spectrum.cs
    inv_rho = 1.0 / spectrum.rho1 + 1.0 / spectrum.rho2
    gen = rng.generator()
    if isinstance(regime, (NullRegime, CriticalRegime)):
        a = float(regime.a) if isinstance(regime, CriticalRegime) else 0.0
        out = np.empty(n_draws)
        shift = a * cs
        std = np.sqrt(inv_rho)
        for start in range(0, n_draws, _DRAW_CHUNK):
            stop = min(start + _DRAW_CHUNK, n_draws)
            xi = gen.normal(0.0, std, size=(stop - start, lam.size))
            if a != 0.0:
                xi -= shift[None, :]
            out[start:stop] = (xi * xi) @ lam
        return out
    if isinstance(regime, IntermediateRegime):
        sigma2 = 4.0 * float((lam * lam * cs * cs).sum()) * inv_rho
        return gen.normal(0.0, np.sqrt(sigma2), size=n_draws)
    if isinstance(regime, FixedRegime):
        if spectrum.cross_moments is None:
            raise ValueError("Fixed regime requires cross_moments in the spectrum")
        v = lam * cs
        quad = float(v @ spectrum.cross_moments @ v)
        sigma3 = 4.0 * ((lam * lam * cs * cs).sum() / spectrum.rho1 + quad / spectrum.rho2)
        sigma3 = max(sigma3, 0.0)
        return gen.normal(0.0, np.sqrt(sigma3), size=n_draws)
    raise TypeError(f"unknown regime: {regime!r}")


@dataclass(frozen=True)
class PowerBoundReport:
    """Non-asymptotic power lower bound with its applicability conditions."""

    T1: float
    C1: float
    C2: float
    C3: float
    C4: float
    n_condition_ok: bool
    separation_condition_ok: bool
    lower_bound_power: float | None
    tau: float
    n: int
    alpha: float

    @property
    def applicable(self) -> bool:
        return self.n_condition_ok and self.separation_condition_ok


def power_lower_bound(spectrum: LimitSpectrum, tau: float, n: int, alpha: float) -> PowerBoundReport:
    """Chebyshev-type finite-n lower bound on the testing power.

    Applicable when n clears the sample-size condition and the scaled
    departure (tau^2 n) T1 clears the separation threshold; otherwise the
    bound value is None (inapplicability is a value, not an error).
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    r1, r2 = spectrum.rho1, spectrum.rho2
    lam, cs = spectrum.lambdas, spectrum.cs
    lam2c2 = float((lam * lam * cs * cs).sum())
    T1 = float((lam * cs * cs).sum())
    C1 = 4.0 * (lam2c2 / r1 + 16.0 / r2)
    C2 = 128.0 * (1.0 / r1**2 + 1.0 / r2**2)
    C3 = 32.0 / (r1 * r2) ** 2
    C4 = float(lam.sum()) / (r1 * r2)
    n_ok = n > (16.0 / 0.1) * (1.0 / r1**3 + 4.0 / r2**3)
    margin = C4 + np.sqrt((C3 + 0.1) / alpha)
    sep_ok = (tau * tau * n) * T1 > margin
    lower: float | None = None
    if n_ok and sep_ok:
        rhs = ((tau * tau * n) * C1 + tau * C2 + C3 + 0.1) / ((tau * tau * n) * T1 - margin) ** 2
        lower = float(np.clip(1.0 - rhs, 0.0, 1.0))
    return PowerBoundReport(
        T1=T1,
        C1=C1,
        C2=C2,
        C3=C3,
        C4=C4,
        n_condition_ok=bool(n_ok),
        separation_condition_ok=bool(sep_ok),
        lower_bound_power=lower,
        tau=tau,
        n=n,
        alpha=alpha,
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Monte-Carlo and limit-based mean/std of a statistic under both hypotheses."""

    kind: str
    theta0: float
    theta1: float
    sigma0: float
    sigma1: float
    theta0_bar: float
    theta1_bar: float
    sigma0_bar: float
    sigma1_bar: float
    ratio_r: float
    ratio_r_bar: float


def statistic_for_kind(
    kind: ComparisonKind,
    X: PointCloud,
    Y: PointCloud,
    refset: ReferenceSet | None,
) -> float:
    """Raw statistic of the given kind on one dataset pair."""
    if isinstance(kind, GaussianKernelSpec):
        return gaussian_mmd2(X, Y, kind.bandwidth)
    if refset is None:
        raise ValueError("reference-kernel kinds require a reference set")
    A = build_affinity_matrix(refset, X, Y)
    if isinstance(kind, L2Statistic):
        return mmd_l2(A, refset.weights)
    svd = truncated_svd(A, kind.r_f)
    return mmd_spec(svd, X.n, Y.n, kind.filter)


def kernel_comparison(
    kinds: Sequence[ComparisonKind],
    refset: ReferenceSet | None,
    p_sampler: Sampler,
    q_sampler: Sampler,
    n: int,
    tau: float,
    n_mc: int,
    rng: RngStream,
    m_points: int = 10000,
    K: int = 500,
    n_limit_draws: int = 50000,
) -> list[ComparisonReport]:
    """Mean/std comparison of statistics under H0 and the tau-departure.

    n is the pooled sample size, split evenly (n1 = n2 = n/2).  Every kernel
    is rescaled so its top centered eigenvalue is 1, which is what makes the
    reported numbers comparable across kernels.  Monte-Carlo trials share
    draws across kinds; the limit-based bars divide the n-scaled limiting
    draws by n.
    """
    if n % 2 != 0:
        raise ValueError("n must be even (n1 = n2 = n/2)")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    n_each = n // 2
    q_tau = mixture_of(p_sampler, q_sampler, tau)

    spectra = [
        estimate_centered_spectrum(
            kind, refset, p_sampler, q_sampler, m_points, 0.5, K, rng.child(0), normalize="unit_top"
        )
        for kind in kinds
    ]

    a = tau * np.sqrt(n)
    reports = []
    stats0 = np.empty((len(kinds), n_mc))
    stats1 = np.empty((len(kinds), n_mc))
    for t in range(n_mc):
        g0 = rng.child(3).child(t).generator()
        X0 = PointCloud(p_sampler(n_each, g0))
        Y0 = PointCloud(p_sampler(n_each, g0))
        g1 = rng.child(4).child(t).generator()
        X1 = PointCloud(p_sampler(n_each, g1))
        Y1 = PointCloud(q_tau(n_each, g1))
        for j, kind in enumerate(kinds):
            stats0[j, t] = statistic_for_kind(kind, X0, Y0, refset)
            stats1[j, t] = statistic_for_kind(kind, X1, Y1, refset)

    for j, (kind, spec) in enumerate(zip(kinds, spectra)):
        mult = spec.statistic_multiplier(n)
        s0 = stats0[j] * mult
        s1 = stats1[j] * mult
        null_draws = limit_distribution(spec, CriticalRegime(0.0), n_limit_draws, rng.child(1))
        alt_draws = limit_distribution(spec, CriticalRegime(float(a)), n_limit_draws, rng.child(2))
        theta0, theta1 = float(s0.mean()), float(s1.mean())
        sigma0, sigma1 = float(s0.std()), float(s1.std())
        t0b, t1b = float(null_draws.mean() / n), float(alt_draws.mean() / n)
        s0b, s1b = float(null_draws.std() / n), float(alt_draws.std() / n)
        reports.append(
            ComparisonReport(
                kind=kind_label(kind),
                theta0=theta0,
                theta1=theta1,
                sigma0=sigma0,
                sigma1=sigma1,
                theta0_bar=t0b,
                theta1_bar=t1b,
                sigma0_bar=s0b,
                sigma1_bar=s1b,
                ratio_r=(theta1 - theta0) / (sigma1 + sigma0),
                ratio_r_bar=(t1b - t0b) / (s1b + s0b),
            )
        )
    return reports
