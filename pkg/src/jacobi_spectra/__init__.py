"""Spectra, Lyapunov exponents, and spectral measures of random
non-Hermitian tridiagonal operators."""

from ._kernels import BACKEND
from ._version import __version__
from .ensemble import (
    CoefficientDistribution,
    CoefficientSequence,
    CoefficientTriple,
    Custom,
    DiscreteAtoms,
    HatanoNelson,
    LiouvilleData,
    MomentReport,
    ScalarLaw,
    SupportReport,
    check_moment_condition,
    check_support_condition,
    constant_triple_distribution,
    distribution_from_dict,
    hopping_ratios,
    in_hatano_nelson_class,
    liouville_transform,
    sample_hatano_nelson,
    sample_sequence,
)
from .measures import (
    DensityGrid,
    EmpiricalMeasure,
    HolderProfile,
    HolderRow,
    PairDistance,
    PotentialGrid,
    ThoulessReport,
    convergence_diagnostic,
    counting_measure,
    gaussian_smoothed,
    grid_from_rows,
    grid_rows,
    laplacian_density,
    log_holder_profile,
    log_potential,
    potential_grid,
    tail_functional,
    thouless_residual,
    thouless_residual_values,
)
from .rng import substream
from .spectra import (
    JacobiMatrix,
    SpectralSample,
    TailBounds,
    WeylReport,
    build_jacobi,
    build_periodic,
    char_poly_eval,
    char_poly_logabs,
    eigenvalues,
    logabs_det,
    singular_values,
    tail_bounds,
    weyl_check,
)
from .transfer import (
    DeviationProbe,
    LyapunovEstimate,
    ScaledTransferState,
    SolutionPair,
    TransferMatrix,
    angular_distance,
    expected_log_c,
    expected_log_ratio,
    large_deviation_probe,
    lyapunov_pair,
    lyapunov_top,
    lyapunov_via_recurrence,
    propagate,
    solution_pair,
    transfer_matrix,
)

__all__ = [
    "BACKEND",
    "__version__",
    "CoefficientDistribution",
    "CoefficientSequence",
    "CoefficientTriple",
    "Custom",
    "DiscreteAtoms",
    "HatanoNelson",
    "LiouvilleData",
    "MomentReport",
    "ScalarLaw",
    "SupportReport",
    "check_moment_condition",
    "check_support_condition",
    "constant_triple_distribution",
    "distribution_from_dict",
    "hopping_ratios",
    "in_hatano_nelson_class",
    "liouville_transform",
    "sample_hatano_nelson",
    "sample_sequence",
    "DensityGrid",
    "EmpiricalMeasure",
    "HolderProfile",
    "HolderRow",
    "PairDistance",
    "PotentialGrid",
    "ThoulessReport",
    "convergence_diagnostic",
    "counting_measure",
    "gaussian_smoothed",
    "grid_from_rows",
    "grid_rows",
    "laplacian_density",
    "log_holder_profile",
    "log_potential",
    "potential_grid",
    "tail_functional",
    "thouless_residual",
    "thouless_residual_values",
    "substream",
    "JacobiMatrix",
    "SpectralSample",
    "TailBounds",
    "WeylReport",
    "build_jacobi",
    "build_periodic",
    "char_poly_eval",
    "char_poly_logabs",
    "eigenvalues",
    "logabs_det",
    "singular_values",
    "tail_bounds",
    "weyl_check",
    "DeviationProbe",
    "LyapunovEstimate",
    "ScaledTransferState",
    "SolutionPair",
    "TransferMatrix",
    "angular_distance",
    "expected_log_c",
    "expected_log_ratio",
    "large_deviation_probe",
    "lyapunov_pair",
    "lyapunov_top",
    "lyapunov_via_recurrence",
    "propagate",
    "solution_pair",
    "transfer_matrix",
]
