"""Anisotropic reference-set kernel MMD: two-sample and k-sample testing.

Affinities between data points and a reference set with per-reference
covariances drive two permutation-calibrated statistics (a plain weighted
histogram gap and a spectrally filtered variant), witness functions,
pairwise sample distances with spectral embedding, and an executable version
of the statistics' power theory.
"""
from .data_model import (
    CovarianceFactor,
    PointCloud,
    ReferenceSet,
    RngStream,
    TestResult,
    derive_stream,
    load_point_cloud,
    load_reference_set,
    load_result,
    save_point_cloud,
    save_reference_set,
    save_result,
)
from .kernel import (
    AffinityMatrix,
    DiffusionTensorPixel,
    affinity_block,
    build_affinity_matrix,
    eval_affinity,
    eval_tensor_affinity,
    vectorize_tensor,
)
from .ksample import DistanceMatrix, affinity_graph, pairwise_distances, spectral_embedding
from .mmd import (
    L2Statistic,
    SpecStatistic,
    StatisticKind,
    gaussian_mmd2,
    gaussian_two_sample_test,
    mmd_l2,
    mmd_spec,
    permutation_null,
    test_from_affinity,
    two_sample_test,
)
from .refset import (
    LocalPcaConfig,
    RefSamplingConfig,
    build_reference_set,
    estimate_covariance_field,
    sample_reference_points,
)
from .spectral import SpectralFilter, SvdTriple, bandpass_filter, diffusion_filter, truncated_svd
from .synthetic import (
    CurvePairConfig,
    MixturePairConfig,
    curve_reference_set,
    curve_sampler,
    gen_curve_pair,
    gen_mixture_pair,
    gen_tensor_grid,
    mixture_of,
    mixture_sampler,
)
from .theory import (
    ComparisonReport,
    CriticalRegime,
    FixedRegime,
    GaussianKernelSpec,
    IntermediateRegime,
    LimitSpectrum,
    NullRegime,
    PowerBoundReport,
    estimate_centered_spectrum,
    kernel_comparison,
    limit_distribution,
    power_lower_bound,
)
from .witness import WitnessEvaluation, witness_l2, witness_spec

__version__ = "0.1.0"
