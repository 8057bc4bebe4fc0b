"""Trace estimation for parameter-dependent symmetric matrices and spectral densities."""

from .chebyshev import (
    CoefficientTable,
    ErrorBound,
    GaussianKernel,
    build_tables,
    dct_i,
    error_bound_nonneg,
    error_bound_standard,
    idct_i,
    interpolate_kernel,
    nonneg_kernel_coeffs,
    square_coeffs,
)
from .estimators import (
    DensityEstimate,
    EstimatorConfig,
    SketchState,
    accumulate_sketch,
    chebyshev_nystrom_pp,
    evaluate_density,
    hutchinson_constant,
    nystrom_constant,
    nystrom_pp_constant,
    sample_gaussian,
    truncated_pinv_solve,
)
from .operator import (
    CountingOperator,
    DenseSymmetric,
    SparseSymmetric,
    SpectralInterval,
    SymmetricOperator,
    affine_transform,
    build_hamiltonian,
    estimate_spectral_interval,
    load_matrix_market,
)
from .reference import EigenSpectrum, dense_spectrum, exact_density, l1_error

__version__ = "0.1.0"
