"""Standard normal CDF, survival function and quantiles.

The tail functions use ``math.erfc`` so the upper tail keeps full relative
accuracy far from zero.  Quantiles come from ``statistics.NormalDist``; the
upper quantile is taken as ``-inv_cdf(alpha)`` rather than ``inv_cdf(1 -
alpha)``, which would round tiny alpha away.
"""

from __future__ import annotations

import math
from statistics import NormalDist

from .errors import DomainError

_SQRT2 = math.sqrt(2.0)
_STD = NormalDist()


def normal_cdf(x: float) -> float:
    """``Phi(x)``."""
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    """Upper-tail probability ``1 - Phi(x)``, accurate far into the right tail."""
    return 0.5 * math.erfc(x / _SQRT2)


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return _STD.inv_cdf(p)


def normal_upper_quantile(alpha: float) -> float:
    """Return ``xi`` with ``Phi(xi) = 1 - alpha``.

    >>> round(normal_upper_quantile(0.05), 5)
    1.64485
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return 0.0 - _STD.inv_cdf(alpha)
