"""Tests for equality of several high-dimensional mean vectors with unequal
covariance matrices, reference comparators, and a Monte Carlo harness."""

__version__ = "0.1.0"

from .data import (
    EstimatorKind,
    GroupSample,
    MultiGroupDataset,
    TestOptions,
    TestOutcome,
    validate_dataset,
)
from .errors import (
    DimensionMismatch,
    DomainError,
    HdmtError,
    NegativeDenominator,
    NonFinite,
    NonPositiveVariance,
    NotPSD,
    SingularScale,
    TooFewGroups,
    TooFewObservations,
)
from .mean_tests import (
    TrueModelSpec,
    VarianceParts,
    asymptotic_power,
    sigma_hat,
    t_stat,
    test_equal_means,
    true_mean_and_variance,
)
from .normal import normal_cdf, normal_sf, normal_upper_quantile
from .reference import sk_intermediates, t_bs, t_cq, t_sk
from .traces import TraceEstimates, estimate_traces

__all__ = [name for name in dir() if not name.startswith("_")]
