"""Tucker low-rank tensor denoising with entrywise statistical inference."""
from .errors import DegeneracyError, DegenerateSpectrumWarning, DimensionError, TensorInferError
from .hooi import HooiConfig, TuckerFit, diagonal_deletion_init, hollow, hooi, scree
from .inference import (
    Ellipsoid,
    InferenceContext,
    IntervalCI,
    TestResult,
    build_context,
    entry_ci,
    entry_variance,
    equality_test,
    joint_covariance,
    joint_region,
    loading_covariance,
    loading_region,
    membership_test,
    pair_difference_ci,
    pair_difference_variance,
    region_contains,
)
from .linalg import align, chi2_quantile, gaussian_quantile, matrix_sign, sin_theta, truncated_svd
from .tensor import (
    TuckerFactors,
    dematricize,
    incoherence,
    matricize,
    mode_product,
    spectral_summary,
    tucker_compose,
    vectorize,
)

__version__ = "0.1.0"
