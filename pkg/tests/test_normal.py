import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdmt.errors import DomainError
from hdmt.normal import normal_cdf, normal_quantile, normal_sf, normal_upper_quantile


def bisect_upper_quantile(alpha, lo=-40.0, hi=40.0):
    # independent route: bisection on the stdlib complementary error function;
    # 1 - alpha is exact above one half, so reflect there to keep resolution
    if alpha > 0.5:
        return -bisect_upper_quantile(1.0 - alpha, lo, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2.0)) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mp_upper_quantile(alpha):
    # enough digits that 2 * alpha - 1 does not round to -1 for tiny alpha
    with mpmath.workdps(340):
        return float(-mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(alpha) - 1))


def test_five_percent_point():
    assert normal_upper_quantile(0.05) == pytest.approx(1.64485, abs=1e-4)


def test_median_is_zero():
    assert normal_upper_quantile(0.5) == 0.0


def test_two_and_a_half_percent_point():
    expected = mp_upper_quantile(0.025)
    assert expected == pytest.approx(1.959964, abs=1e-6)
    assert normal_upper_quantile(0.025) == pytest.approx(1.959964, abs=1e-5)
    assert normal_upper_quantile(0.025) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_domain(alpha):
    with pytest.raises(DomainError):
        normal_upper_quantile(alpha)


@pytest.mark.parametrize("alpha", [1e-300, 1e-20, 1e-8, 1e-3, 0.01, 0.1, 0.3, 0.7, 0.9, 0.999, 1 - 1e-12])
def test_quantile_against_high_precision(alpha):
    assert normal_upper_quantile(alpha) == pytest.approx(mp_upper_quantile(alpha), abs=1e-8)


@given(st.floats(min_value=1e-12, max_value=1 - 1e-12))
def test_quantile_matches_bisection(alpha):
    assert abs(normal_upper_quantile(alpha) - bisect_upper_quantile(alpha)) <= 1e-8


@settings(max_examples=300)
@given(st.floats(min_value=1e-10, max_value=1 - 1e-10))
def test_mutual_inverse(alpha):
    assert abs(normal_sf(normal_upper_quantile(alpha)) - alpha) <= 1e-7
    x = normal_quantile(alpha)
    assert abs(normal_cdf(x) - alpha) <= 1e-7


def test_cdf_values():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-15)
    assert normal_sf(8.0) == pytest.approx(6.22096057427178e-16, rel=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, float("nan")])
def test_lower_quantile_domain(p):
    with pytest.raises(DomainError):
        normal_quantile(p)
