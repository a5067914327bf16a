"""Seeded generators for the synthetic experiments.

Example 1: uniform measure on a quarter circle of radius 1 (respectively
1 - delta) convolved with isotropic Gaussian noise of scale eps_x.
Example 2: three equal-weight Gaussian components in R^3 whose means the
alternative shifts by delta along a cyclic pattern.
The tensor grid builds a side x side field of 3x3 diffusion tensors with
linear magnitude/angle ramps and an optional eccentricity-flattened box.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data_model import CovarianceFactor, PointCloud, ReferenceSet, RngStream
from .kernel import DiffusionTensorPixel

__all__ = [
    "CurvePairConfig",
    "MixturePairConfig",
    "gen_curve_pair",
    "gen_mixture_pair",
    "gen_tensor_grid",
    "curve_sampler",
    "mixture_sampler",
    "mixture_of",
    "curve_reference_set",
    "curve_strip_reference_set",
]

Sampler = Callable[[int, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class CurvePairConfig:
    n1: int
    n2: int
    delta: float
    eps_x: float = 0.02

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("sample sizes must be >= 1")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must be in [0, 1)")
        if self.eps_x < 0:
            raise ValueError("eps_x must be >= 0")


@dataclass(frozen=True)
class MixturePairConfig:
    n1: int
    n2: int
    delta: float
    eps_x: float = 0.02

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("sample sizes must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.eps_x < 0:
            raise ValueError("eps_x must be >= 0")


def _curve_points(count: int, radius: float, eps_x: float, gen: np.random.Generator) -> np.ndarray:
    t = gen.uniform(0.0, 1.0, size=count)
    angle = 0.5 * np.pi * t
    pts = radius * np.column_stack([np.cos(angle), np.sin(angle)])
    if eps_x > 0:
        pts = pts + gen.normal(0.0, eps_x, size=pts.shape)
    return pts


def curve_sampler(delta: float = 0.0, eps_x: float = 0.02, radius: float = 1.0) -> Sampler:
    """Sampler for the quarter-circle law at radius * (1 - delta)."""

    def draw(count: int, gen: np.random.Generator) -> np.ndarray:
        return _curve_points(count, radius * (1.0 - delta), eps_x, gen)

    return draw


def gen_curve_pair(config: CurvePairConfig, rng: RngStream) -> tuple[PointCloud, PointCloud]:
    gen = rng.generator()
    x = _curve_points(config.n1, 1.0, config.eps_x, gen)
    y = _curve_points(config.n2, 1.0 - config.delta, config.eps_x, gen)
    return PointCloud(x, label="curve-p"), PointCloud(y, label="curve-q")


_MIX_VAR_MAIN = (1.0 / 3.0) ** 2


def _mixture_params(delta: float, eps_x: float) -> tuple[np.ndarray, np.ndarray]:
    means = np.array([[1.0, delta, 0.0], [0.0, 1.0, delta], [delta, 0.0, 1.0]])
    stds = np.empty((3, 3))
    for c in range(3):
        s2 = np.full(3, eps_x**2)
        s2[c] = _MIX_VAR_MAIN
        stds[c] = np.sqrt(s2)
    return means, stds


def _mixture_points(count: int, delta: float, eps_x: float, gen: np.random.Generator) -> np.ndarray:
    means, stds = _mixture_params(delta, eps_x)
    comps = gen.integers(0, 3, size=count)
    noise = gen.normal(0.0, 1.0, size=(count, 3))
    return means[comps] + noise * stds[comps]


def mixture_sampler(delta: float = 0.0, eps_x: float = 0.02) -> Sampler:
    """Sampler for the three-component Gaussian mixture with mean shift delta."""

    def draw(count: int, gen: np.random.Generator) -> np.ndarray:
        return _mixture_points(count, delta, eps_x, gen)

    return draw


def gen_mixture_pair(config: MixturePairConfig, rng: RngStream) -> tuple[PointCloud, PointCloud]:
    gen = rng.generator()
    x = _mixture_points(config.n1, 0.0, config.eps_x, gen)
    y = _mixture_points(config.n2, config.delta, config.eps_x, gen)
    return PointCloud(x, label="mixture-p"), PointCloud(y, label="mixture-q")


def mixture_of(p_sampler: Sampler, q_sampler: Sampler, tau: float) -> Sampler:
    """Sampler for (1 - tau) p + tau q, the one-parameter departure family."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")

    def draw(count: int, gen: np.random.Generator) -> np.ndarray:
        from_q = gen.uniform(size=count) < tau
        pts = p_sampler(count, gen)
        n_q = int(from_q.sum())
        if n_q:
            pts[from_q] = q_sampler(n_q, gen)
        return pts

    return draw


def curve_reference_set(
    n_r: int,
    tangent_sigma: float = 0.2,
    normal_sigma: float = 0.02,
    radius: float = 1.0,
) -> ReferenceSet:
    """Analytic reference set on the quarter circle.

    References sit at uniformly spaced arc parameters; each covariance has
    the curve tangent as first principal direction (variance tangent_sigma^2)
    and the normal as second (variance normal_sigma^2).
    """
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    t = (np.arange(n_r) + 0.5) / n_r
    angle = 0.5 * np.pi * t
    refs = radius * np.column_stack([np.cos(angle), np.sin(angle)])
    covs = []
    for a in angle:
        tangent = np.array([-np.sin(a), np.cos(a)])
        normal = np.array([np.cos(a), np.sin(a)])
        q = np.column_stack([tangent, normal])
        covs.append(CovarianceFactor(eigvecs=q, eigvals=np.array([tangent_sigma**2, normal_sigma**2])))
    return ReferenceSet.uniform(refs, covs)


def curve_strip_reference_set(
    n_theta: int = 42,
    n_u: int = 25,
    tangent_sigma: float = 0.2,
    normal_sigma: float = 0.02,
    pad_angle: float = 0.25,
    halfwidth: float = 0.12,
    radius: float = 1.0,
) -> ReferenceSet:
    """Deterministic grid of references covering an annular strip.

    Quadrature surrogate for a flat (Lebesgue) reference measure around the
    quarter circle: angles run pad_angle beyond both arc ends, radial offsets
    span +-halfwidth, and each covariance uses the tangent/normal frame of
    its angle.  Spacings well below the kernel widths make the grid an
    essentially exact quadrature for the implied symmetric kernel.
    """
    if n_theta < 2 or n_u < 1:
        raise ValueError("need n_theta >= 2 and n_u >= 1")
    angles = np.linspace(-pad_angle, 0.5 * np.pi + pad_angle, n_theta)
    offsets = np.linspace(-halfwidth, halfwidth, n_u) if n_u > 1 else np.array([0.0])
    refs = []
    covs = []
    for a in angles:
        tangent = np.array([-np.sin(a), np.cos(a)])
        normal = np.array([np.cos(a), np.sin(a)])
        q = np.column_stack([tangent, normal])
        cov = CovarianceFactor(eigvecs=q, eigvals=np.array([tangent_sigma**2, normal_sigma**2]))
        for u in offsets:
            refs.append((radius + u) * normal)
            covs.append(cov)
    return ReferenceSet.uniform(np.asarray(refs), covs)


def gen_tensor_grid(
    side: int,
    anomaly_box: tuple[int, int, int, int] | None = None,
    noise_sigma: float = 0.0,
    rng: RngStream | None = None,
    base_ecc: float = 4.0,
    anomaly_ecc: float = 1.0,
    mag_left: float = 1.0,
    mag_right: float = 0.5,
    angle_left: float = 0.0,
    angle_right: float = 0.5 * np.pi,
    z_fraction: float = 0.5,
) -> list[DiffusionTensorPixel]:
    """side x side grid of symmetric PSD tensors with linear ramps.

    The in-plane eigenvalues are (magnitude * ecc, magnitude) rotated by the
    local angle; the z eigenvalue is z_fraction * magnitude and uncorrelated
    with the plane.  Magnitude decreases and angle shifts linearly from left
    to right.  Inside anomaly_box = (row0, row1, col0, col1) (half-open) the
    eccentricity is flattened to anomaly_ecc.  Noise is applied to
    log-eigenvalues and angle, which keeps every tensor PSD.
    """
    if side < 2:
        raise ValueError("side must be >= 2")
    gen = rng.generator() if rng is not None else None
    if noise_sigma > 0 and gen is None:
        raise ValueError("noise_sigma > 0 requires an RngStream")
    pixels: list[DiffusionTensorPixel] = []
    for i in range(side):
        for j in range(side):
            frac = j / (side - 1)
            mag = mag_left + (mag_right - mag_left) * frac
            angle = angle_left + (angle_right - angle_left) * frac
            ecc = base_ecc
            if anomaly_box is not None:
                r0, r1, c0, c1 = anomaly_box
                if r0 <= i < r1 and c0 <= j < c1:
                    ecc = anomaly_ecc
            log_eigs = np.log(np.array([mag * ecc, mag, z_fraction * mag]))
            if noise_sigma > 0:
                log_eigs = log_eigs + gen.normal(0.0, noise_sigma, size=3)
                angle = angle + gen.normal(0.0, noise_sigma)
            lam = np.exp(log_eigs)
            c, s = np.cos(angle), np.sin(angle)
            rot = np.array([[c, -s], [s, c]])
            plane = rot @ np.diag(lam[:2]) @ rot.T
            tensor = np.zeros((3, 3))
            tensor[:2, :2] = 0.5 * (plane + plane.T)
            tensor[2, 2] = lam[2]
            pixels.append(DiffusionTensorPixel(location=np.array([float(i), float(j)]), tensor=tensor))
    return pixels
