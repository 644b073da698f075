import math

import numpy as np
import pytest

from hdmt.data import EstimatorKind, MultiGroupDataset, TestOptions
from hdmt.errors import DimensionMismatch, DomainError, NonPositiveVariance, TooFewObservations
from hdmt.mean_tests import (
    TrueModelSpec,
    asymptotic_power,
    mu_quadratic,
    sigma_hat,
    standardize,
    t_stat,
    t_stat_ustat,
    test_equal_means,
    true_mean_and_variance,
    variance_from_traces,
)
from hdmt.models import CovarianceModel, build_sigma
from hdmt.reference import t_cq

from conftest import random_dataset, rel


def test_t_stat_zero_when_groups_identical():
    x = np.random.default_rng(0).standard_normal((6, 4))
    ds = MultiGroupDataset.from_arrays([x, x.copy(), x.copy()])
    # identical groups: the between part vanishes, leaving the trace correction
    expected = -2 * 3 * np.trace(np.cov(x, rowvar=False)) / 6
    assert t_stat(ds) == pytest.approx(expected, rel=1e-12)


def test_t_stat_by_hand():
    a = np.array([[0.0, 0.0], [2.0, 0.0]])
    b = np.array([[1.0, 1.0], [1.0, 3.0]])
    ds = MultiGroupDataset.from_arrays([a, b])
    # means (1,0), (1,2); tr S_a = 2, tr S_b = 2
    assert t_stat(ds) == pytest.approx(4.0 - (2 / 2 + 2 / 2))


def test_two_forms_agree(rng):
    for _ in range(50):
        k = int(rng.integers(2, 6))
        ns = [int(n) for n in rng.integers(2, 12, size=k)]
        ds = random_dataset(rng, ns, int(rng.integers(1, 30)), shift=rng.normal(scale=3))
        assert rel(t_stat(ds), t_stat_ustat(ds)) <= 1e-10


def test_k2_matches_chen_qin_statistic(rng):
    ds = random_dataset(rng, [7, 11], 15, shift=2.0)
    assert rel(t_stat(ds), t_cq(*ds.groups).statistic) <= 1e-12


def test_t_stat_shift_and_rotation_invariant(rng):
    ds = random_dataset(rng, [5, 6, 7], 4)
    c = rng.normal(size=4) * 10
    shifted = ds.map(lambda x: x + c)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    rotated = ds.map(lambda x: x @ q)
    base = t_stat(ds)
    assert rel(t_stat(shifted), base) <= 1e-9
    assert rel(t_stat(rotated), base) <= 1e-10


def test_variance_from_traces_coefficients():
    parts = variance_from_traces([4, 5, 6], [1.0, 2.0, 3.0], {(0, 1): 1.0, (0, 2): 2.0, (1, 2): 3.0})
    # 2 (k-1)^2 = 8 at k = 3
    assert parts.per_group_terms == pytest.approx((8 / 12, 16 / 20, 24 / 30))
    assert parts.cross_terms == pytest.approx((4 / 20, 8 / 24, 12 / 30))
    assert parts.sigma_sq_hat == pytest.approx(sum(parts.per_group_terms) + sum(parts.cross_terms))


def test_variance_k2_reduces_to_chen_qin_form():
    parts = variance_from_traces([10, 12], [5.0, 7.0], {(0, 1): 3.0})
    expected = 2 * 5 / 90 + 2 * 7 / 132 + 4 * 3 / 120
    assert parts.sigma_sq_hat == pytest.approx(expected, rel=1e-14)


def test_variance_k4_coefficient():
    parts = variance_from_traces([5] * 4, [1.0] * 4, {(i, j): 0.0 for i in range(4) for j in range(i + 1, 4)})
    assert parts.per_group_terms[0] == pytest.approx(18 / 20)


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_sigma_hat_positive(rng, kind):
    ds = random_dataset(rng, [8, 9, 10], 12)
    assert sigma_hat(ds, kind).sigma_sq_hat > 0


def test_sigma_hat_nonpositive_raises():
    const = np.tile([1.0, 2.0], (5, 1))
    ds = MultiGroupDataset.from_arrays([const, const + 1.0, const - 1.0])
    with pytest.raises(NonPositiveVariance):
        sigma_hat(ds, EstimatorKind.UMVUE)


def test_equal_means_outcome(rng):
    ds = random_dataset(rng, [20, 25, 30], 40)
    out = test_equal_means(ds)
    assert out.test_name == "our" and out.estimator == "umvue"
    assert out.z == pytest.approx(out.statistic / out.std_err)
    assert 0.0 < out.p_value < 1.0
    assert out.reject == (out.z > 1.6448536269514722)
    une = test_equal_means(ds, TestOptions(estimator=EstimatorKind.UNE, alpha=0.1))
    assert une.estimator == "une" and une.alpha == 0.1
    assert une.statistic == out.statistic


def test_equal_means_rejects_large_shift(rng):
    groups = [rng.standard_normal((30, 50)) + m for m in (0.0, 0.0, 1.0)]
    out = test_equal_means(MultiGroupDataset.from_arrays(groups))
    assert out.reject and out.p_value < 1e-6


def test_equal_means_une_small_group(rng):
    ds = random_dataset(rng, [5, 8, 8], 3)
    with pytest.raises(TooFewObservations):
        test_equal_means(ds, TestOptions(estimator=EstimatorKind.UNE))


def test_standardize_fields():
    out = standardize("our", 3.0, 2.0, 0.05, "umvue")
    assert out.z == 1.5 and not out.reject
    assert out.p_value == pytest.approx(0.0668072, abs=1e-7)


def test_true_moments_identity_null():
    spec = TrueModelSpec([np.eye(3)] * 2, [np.zeros(3)] * 2, [5, 5])
    mean, var = true_mean_and_variance(spec)
    assert mean == 0.0
    assert var == pytest.approx(2 * 3 / 20 * 2 + 4 * 3 / 25)


def test_true_moments_mean_shift_term():
    mus = [np.zeros(2), np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
    spec = TrueModelSpec([np.eye(2)] * 3, mus, [4, 4, 4])
    mean, var = true_mean_and_variance(spec)
    assert mean == pytest.approx(mu_quadratic(mus)) and mean == pytest.approx(6.0)
    null_var = true_mean_and_variance(TrueModelSpec([np.eye(2)] * 3, [np.zeros(2)] * 3, [4, 4, 4]))[1]
    # v_i = sum(mu) - 3 mu_i gives ||v||^2 = 0, 9, 9
    assert var - null_var == pytest.approx(4 * 18 / 4)


def test_true_model_validation():
    with pytest.raises(DimensionMismatch):
        TrueModelSpec([np.eye(2)], [np.zeros(2), np.zeros(2)], [3, 3])
    with pytest.raises(DimensionMismatch):
        TrueModelSpec([np.eye(3), np.eye(2)], [np.zeros(2)] * 2, [3, 3])
    with pytest.raises(DomainError):
        TrueModelSpec([np.array([[1.0, 0.5], [0.0, 1.0]])], [np.zeros(2)], [3])


def test_true_moments_with_structured_covariance():
    sigmas = [build_sigma(CovarianceModel.case2(6, i)) for i in (1, 2, 3)]
    mean, var = true_mean_and_variance(TrueModelSpec(sigmas, [np.zeros(6)] * 3, [4, 5, 6]))
    tr = [np.sum(s * s) for s in sigmas]
    expected = sum(8 * t / (n * (n - 1)) for t, n in zip(tr, [4, 5, 6]))
    expected += sum(4 * np.sum(sigmas[i] * sigmas[j]) / (ni * nj)
                    for (i, ni) in enumerate([4, 5, 6]) for (j, nj) in enumerate([4, 5, 6]) if i < j)
    assert var == pytest.approx(expected, rel=1e-12) and mean == 0.0


def test_asymptotic_power():
    assert asymptotic_power(0.0, 1.0, 0.05) == 0.05
    assert asymptotic_power(1.6448536269514722, 1.0, 0.05) == pytest.approx(0.5, abs=1e-12)
    assert asymptotic_power(100.0, 1.0, 0.05) == pytest.approx(1.0)
    low, high = asymptotic_power(1.0, 1.0, 0.05), asymptotic_power(2.0, 1.0, 0.05)
    assert 0.05 < low < high
    with pytest.raises(DomainError):
        asymptotic_power(1.0, 0.0, 0.05)
    with pytest.raises(DomainError):
        asymptotic_power(-1.0, 1.0, 0.05)
    with pytest.raises(DomainError):
        asymptotic_power(1.0, 1.0, 1.5)


def test_mu_quadratic():
    assert mu_quadratic([np.zeros(3), np.ones(3)]) == 3.0
    assert math.isclose(mu_quadratic([np.zeros(2), np.array([3.0, 4.0]), np.zeros(2)]), 50.0)
