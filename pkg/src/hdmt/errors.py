"""Exception hierarchy.

Every error raised by the library derives from :class:`HdmtError`, which is a
``ValueError`` so callers that only care about bad input can catch that.
"""

from __future__ import annotations


class HdmtError(ValueError):
    """Base class for all library errors."""

    #: short machine-greppable tag used by the CLI diagnostics
    code = "error"


class NonFinite(HdmtError):
    code = "non-finite"


class DimensionMismatch(HdmtError):
    code = "dimension-mismatch"


class TooFewGroups(HdmtError):
    code = "too-few-groups"


class TooFewObservations(HdmtError):
    code = "too-few-observations"


class DomainError(HdmtError):
    code = "domain"


class NonPositiveVariance(HdmtError):
    """The estimated null variance is <= 0, so the statistic cannot be standardized."""

    code = "non-positive-variance"


class SingularScale(HdmtError):
    """A coordinate has zero within-group variance."""

    code = "singular-scale"


class NegativeDenominator(HdmtError):
    code = "negative-denominator"


class NotPSD(HdmtError):
    code = "not-psd"


class UnknownFormat(HdmtError):
    code = "unknown-format"


class ConfigError(HdmtError):
    code = "config"


#: errors that make a single replication degenerate rather than invalid
DEGENERATE_ERRORS = (NonPositiveVariance, SingularScale, NegativeDenominator)
