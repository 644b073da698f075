"""The k-sample statistic T_n^(k), its null variance, and the standardized test.

Model assumptions (moment independence, n_i/n converging to a constant, the
trace condition tr(S_l S_d S_l S_h) = o(tr(S_l S_d) tr(S_l S_h)) and the
mean-direction condition under the alternative) are asymptotic regularity
conditions.  They cannot be checked from one dataset and are not checked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (
    EstimatorKind,
    MultiGroupDataset,
    TestOptions,
    TestOutcome,
    require_n,
)
from .errors import DimensionMismatch, DomainError, NonPositiveVariance
from .normal import normal_cdf, normal_sf, normal_upper_quantile
from .traces import estimate_traces, sample_mean


def t_stat(ds: MultiGroupDataset) -> float:
    """sum_{i<j} ||mean_i - mean_j||^2 - (k-1) sum_i tr(S_i)/n_i."""
    for g in ds.groups:
        require_n(g, 2, "T_n^(k)")
    k = ds.k
    means = [sample_mean(g) for g in ds.groups]
    between = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            d = means[i] - means[j]
            between += float(d @ d)
    correction = 0.0
    for g, m in zip(ds.groups, means):
        xc = g.data - m
        correction += float(np.sum(xc * xc)) / ((g.n - 1) * g.n)
    return between - (k - 1) * correction


def t_stat_ustat(ds: MultiGroupDataset) -> float:
    """The same statistic written with within- and between-group cross products."""
    k = ds.k
    total = 0.0
    sums = [g.data.sum(axis=0) for g in ds.groups]
    for g, s in zip(ds.groups, sums):
        off = float(s @ s) - float(np.sum(g.data * g.data))
        total += (k - 1) * off / (g.n * (g.n - 1))
    for i in range(k):
        for j in range(i + 1, k):
            ni, nj = ds.groups[i].n, ds.groups[j].n
            total -= 2.0 * float(sums[i] @ sums[j]) / (ni * nj)
    return total


@dataclass(frozen=True)
class VarianceParts:
    """Estimated null variance of T_n^(k), split into its summands."""

    sigma_sq_hat: float
    per_group_terms: tuple[float, ...]
    cross_terms: tuple[float, ...]


def variance_from_traces(
    ns: Sequence[int], tr_sq: Sequence[float], tr_cross
) -> VarianceParts:
    """Assemble sum_i 2(k-1)^2 tr_i/(n_i(n_i-1)) + sum_{i<j} 4 tr_ij/(n_i n_j).

    ``tr_cross`` maps (i, j) with i < j to the cross-trace value.
    """
    k = len(ns)
    coef = 2.0 * (k - 1) ** 2
    per_group = tuple(coef * t / (n * (n - 1)) for n, t in zip(ns, tr_sq))
    cross = tuple(
        4.0 * tr_cross[(i, j)] / (ns[i] * ns[j])
        for i in range(k)
        for j in range(i + 1, k)
    )
    return VarianceParts(math.fsum(per_group + cross), per_group, cross)


def sigma_hat(ds: MultiGroupDataset, kind: EstimatorKind) -> VarianceParts:
    """Estimated (sigma_n^(k))^2.

    Raises NonPositiveVariance when the estimate is not positive.
    """
    est = estimate_traces(ds, kind)
    parts = variance_from_traces(ds.ns, est.tr_sq, est.tr_cross)
    if not parts.sigma_sq_hat > 0.0:
        raise NonPositiveVariance(
            f"estimated variance {parts.sigma_sq_hat!r} with {est.kind.value} "
            "estimators is not positive"
        )
    return parts


def standardize(
    test_name: str, statistic: float, std_err: float, alpha: float, estimator: str
) -> TestOutcome:
    xi = normal_upper_quantile(alpha)
    z = statistic / std_err
    return TestOutcome(
        test_name=test_name,
        statistic=float(statistic),
        std_err=float(std_err),
        z=float(z),
        p_value=normal_sf(z),
        alpha=float(alpha),
        reject=bool(z > xi),
        estimator=estimator,
    )


def test_equal_means(
    ds: MultiGroupDataset, opts: TestOptions = TestOptions()
) -> TestOutcome:
    """One-sided test of H0: mu_1 = ... = mu_k, rejecting for large z."""
    parts = sigma_hat(ds, opts.estimator)
    return standardize(
        "our",
        t_stat(ds),
        math.sqrt(parts.sigma_sq_hat),
        opts.alpha,
        opts.estimator.value,
    )


test_equal_means.__test__ = False


@dataclass(frozen=True)
class TrueModelSpec:
    sigmas: tuple[np.ndarray, ...]
    mus: tuple[np.ndarray, ...]
    ns: tuple[int, ...]

    def __post_init__(self) -> None:
        sigmas = tuple(np.asarray(s, dtype=float) for s in self.sigmas)
        mus = tuple(np.asarray(m, dtype=float).ravel() for m in self.mus)
        ns = tuple(int(n) for n in self.ns)
        if not len(sigmas) == len(mus) == len(ns):
            raise DimensionMismatch("sigmas, mus and ns must have the same length")
        p = mus[0].size
        for s, m in zip(sigmas, mus):
            if s.shape != (p, p) or m.size != p:
                raise DimensionMismatch(
                    f"inconsistent shapes: sigma {s.shape}, mu {m.shape}, p={p}"
                )
            if not np.allclose(s, s.T):
                raise DomainError("covariance matrices must be symmetric")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "ns", ns)


def true_mean_and_variance(spec: TrueModelSpec) -> tuple[float, float]:
    """Exact E(T_n^(k)) and Var(T_n^(k)) under the linear generating model."""
    k = len(spec.ns)
    mus, sigmas, ns = spec.mus, spec.sigmas, spec.ns
    mean = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            d = mus[i] - mus[j]
            mean += float(d @ d)
    tr_sq = [float(np.sum(s * s)) for s in sigmas]
    tr_cross = {
        (i, j): float(np.sum(sigmas[i] * sigmas[j]))
        for i in range(k)
        for j in range(i + 1, k)
    }
    var = variance_from_traces(ns, tr_sq, tr_cross).sigma_sq_hat
    total_mu = sum(mus)
    for i in range(k):
        v = total_mu - k * mus[i]
        var += 4.0 * float(v @ sigmas[i] @ v) / ns[i]
    return mean, var


def mu_quadratic(mus: Sequence[np.ndarray]) -> float:
    """sum_{i<j} ||mu_i - mu_j||^2."""
    total = 0.0
    for i in range(len(mus)):
        for j in range(i + 1, len(mus)):
            d = np.asarray(mus[i]) - np.asarray(mus[j])
            total += float(d @ d)
    return total


def asymptotic_power(mu_quadratic: float, sigma_n: float, alpha: float) -> float:
    """Phi(-xi_alpha + mu_quadratic / sigma_n)."""
    if not sigma_n > 0.0:
        raise DomainError(f"sigma_n must be positive, got {sigma_n!r}")
    if mu_quadratic < 0.0:
        raise DomainError(f"mu_quadratic must be nonnegative, got {mu_quadratic!r}")
    xi = normal_upper_quantile(alpha)
    if mu_quadratic == 0.0:
        return float(alpha)
    return normal_cdf(-xi + mu_quadratic / sigma_n)
