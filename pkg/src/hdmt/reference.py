"""Comparator statistics: Bai-Saranadasa, Chen-Qin and Srivastava-Kubokawa."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import GroupSample, MultiGroupDataset, TestOutcome, require_n, require_same_p
from .errors import NegativeDenominator, NonPositiveVariance, SingularScale, TooFewObservations
from .mean_tests import standardize
from .normal import normal_sf, normal_upper_quantile
from .traces import cq_tr_cross, cq_tr_sq, sample_mean


def _mean_gap(a: GroupSample, b: GroupSample) -> float:
    d = sample_mean(a) - sample_mean(b)
    return float(d @ d)


def _scatter(g: GroupSample) -> np.ndarray:
    xc = g.data - sample_mean(g)
    return xc.T @ xc


def t_bs(a: GroupSample, b: GroupSample, alpha: float = 0.05) -> TestOutcome:
    """Two-sample statistic assuming a common covariance, pooled estimate S_n."""
    require_same_p(a, b)
    n1, n2 = a.n, b.n
    n = n1 + n2
    if n < 4 or n1 < 1 or n2 < 1:
        raise TooFewObservations(f"Bai-Saranadasa test needs n1 + n2 >= 4, got {n}")
    s_n = (_scatter(a) + _scatter(b)) / (n - 2)
    tr_s = float(np.trace(s_n))
    tr_s2 = float(np.sum(s_n * s_n))
    stat = _mean_gap(a, b) - n / (n1 * n2) * tr_s
    tr_sigma2 = (n - 2) ** 2 / (n * (n - 3)) * (tr_s2 - tr_s**2 / (n - 2))
    var = 2.0 * n**2 * (n - 1) / (n1**2 * n2**2 * (n - 2)) * tr_sigma2
    if not var > 0.0:
        raise NonPositiveVariance(f"Bai-Saranadasa variance estimate {var!r} is not positive")
    return standardize("bs", stat, math.sqrt(var), alpha, "builtin")


def t_cq(a: GroupSample, b: GroupSample, alpha: float = 0.05) -> TestOutcome:
    """Two-sample statistic allowing unequal covariances."""
    require_same_p(a, b)
    require_n(a, 4, "the Chen-Qin test")
    require_n(b, 4, "the Chen-Qin test")
    n1, n2 = a.n, b.n
    tr1 = float(np.trace(_scatter(a))) / (n1 - 1)
    tr2 = float(np.trace(_scatter(b))) / (n2 - 1)
    stat = _mean_gap(a, b) - tr1 / n1 - tr2 / n2
    var = (
        2.0 / (n1 * (n1 - 1)) * cq_tr_sq(a)
        + 2.0 / (n2 * (n2 - 1)) * cq_tr_sq(b)
        + 4.0 / (n1 * n2) * cq_tr_cross(a, b)
    )
    if not var > 0.0:
        raise NonPositiveVariance(f"Chen-Qin variance estimate {var!r} is not positive")
    return standardize("cq", stat, math.sqrt(var), alpha, "cq")


@dataclass(frozen=True)
class SkIntermediates:
    B: np.ndarray  # between-group hypothesis matrix, p x p
    D_S: np.ndarray  # within-group variances, length p
    R: np.ndarray  # within-group correlation matrix
    c_pn: float
    dof: tuple[int, int, int]  # (n, k, p)

    @property
    def tr_BD(self) -> float:
        return float(np.sum(np.diag(self.B) / self.D_S))

    @property
    def tr_R2(self) -> float:
        return float(np.sum(self.R * self.R))


def _design(ds: MultiGroupDataset) -> tuple[np.ndarray, np.ndarray]:
    """Stacked n x p data Y and the n x k group-indicator matrix E."""
    y = np.vstack([g.data for g in ds.groups])
    e = np.zeros((ds.total_n, ds.k))
    start = 0
    for i, g in enumerate(ds.groups):
        e[start : start + g.n, i] = 1.0
        start += g.n
    return y, e


def sk_intermediates(ds: MultiGroupDataset) -> SkIntermediates:
    n, k, p = ds.total_n, ds.k, ds.p
    if n - k < 3:
        raise TooFewObservations(f"Srivastava-Kubokawa test needs n - k >= 3, got {n - k}")
    y, e = _design(ds)
    ete = e.T @ e
    group_means = np.linalg.solve(ete, e.T @ y)  # (E'E)^-1 E'Y, k x p
    ell = np.hstack([np.eye(k - 1), -np.ones((k - 1, 1))])
    # L (E'E)^-1 L' is (k-1) x (k-1); solve instead of inverting
    middle = ell @ np.linalg.solve(ete, ell.T)
    lm = ell @ group_means
    b = lm.T @ np.linalg.solve(middle, lm)
    b = 0.5 * (b + b.T)

    resid = y - e @ group_means  # (I - E(E'E)^-1 E') Y
    within = resid.T @ resid
    within = 0.5 * (within + within.T)
    d_s = np.diag(within) / (n - k)
    scale = np.sqrt(np.diag(within))
    if np.any(~(d_s > 0.0)):
        j = int(np.argmax(~(d_s > 0.0)))
        raise SingularScale(
            f"coordinate {j} has zero within-group variance; T_sk is undefined"
        )
    r = within / np.outer(scale, scale)
    np.fill_diagonal(r, 1.0)
    c_pn = 1.0 + float(np.sum(r * r)) / p**1.5
    return SkIntermediates(b, d_s, r, c_pn, (n, k, p))


def t_sk(ds: MultiGroupDataset, alpha: float = 0.05) -> TestOutcome:
    """Scale-invariant k-sample statistic assuming a common covariance.

    The value reported as ``statistic`` and ``z`` is already standardized;
    ``std_err`` is 1.
    """
    sk = sk_intermediates(ds)
    n, k, p = sk.dof
    centre = (n - k) * p * (k - 1) / (n - k - 2)
    inner = sk.tr_R2 - p * p / (n - k)
    if not inner > 0.0:
        raise NegativeDenominator(
            f"tr(R^2) - p^2/(n-k) = {inner!r} is not positive; T_sk is undefined"
        )
    z = (sk.tr_BD - centre) / math.sqrt(2.0 * sk.c_pn * (k - 1) * inner)
    xi = normal_upper_quantile(alpha)
    return TestOutcome(
        test_name="sk",
        statistic=float(z),
        std_err=1.0,
        z=float(z),
        p_value=normal_sf(z),
        alpha=float(alpha),
        reject=bool(z > xi),
        estimator="builtin",
    )
