"""Immutable containers for grouped observations and test results."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    NonFinite,
    TooFewGroups,
    TooFewObservations,
)


class EstimatorKind(str, enum.Enum):
    """Family of trace estimators used to standardize a statistic."""

    UMVUE = "umvue"
    UNE = "une"
    CHEN_QIN = "cq"

    @classmethod
    def parse(cls, value: "str | EstimatorKind") -> "EstimatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise DomainError(f"unknown estimator kind {value!r}")


def _frozen_array(data: Any) -> np.ndarray:
    arr = np.array(data, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GroupSample:
    """Observations of one group, rows are observations.

    A single-row sample is accepted (its mean is defined); anything that needs
    a covariance checks ``n >= 2`` itself.
    """

    data: np.ndarray
    group_id: Hashable = 0

    def __post_init__(self) -> None:
        arr = _frozen_array(self.data)
        if arr.ndim == 1:
            arr = _frozen_array(arr.reshape(1, -1))
        if arr.ndim != 2:
            raise DimensionMismatch(
                f"group {self.group_id!r}: expected a 2-d array, got ndim={arr.ndim}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise TooFewObservations(
                f"group {self.group_id!r}: empty sample with shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise NonFinite(
                f"group {self.group_id!r}: non-finite value at row {bad[0]}, "
                f"coordinate {bad[1]}"
            )
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupSample):
            return NotImplemented
        return self.group_id == other.group_id and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.group_id, self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"GroupSample(group_id={self.group_id!r}, n={self.n}, p={self.p})"


def require_n(g: GroupSample, minimum: int, what: str) -> None:
    if g.n < minimum:
        raise TooFewObservations(
            f"group {g.group_id!r} has n={g.n}; {what} needs n >= {minimum}"
        )


def require_same_p(a: GroupSample, b: GroupSample) -> None:
    if a.p != b.p:
        raise DimensionMismatch(
            f"groups {a.group_id!r} and {b.group_id!r} have p={a.p} and p={b.p}"
        )


@dataclass(frozen=True, eq=False)
class MultiGroupDataset:
    """k >= 2 groups sharing the same dimension, in input order."""

    groups: tuple[GroupSample, ...]

    def __post_init__(self) -> None:
        groups = tuple(self.groups)
        if len(groups) < 2:
            raise TooFewGroups(f"need at least 2 groups, got {len(groups)}")
        ids = [g.group_id for g in groups]
        if len(set(ids)) != len(ids):
            raise DomainError(f"group labels must be distinct, got {ids!r}")
        p = groups[0].p
        for g in groups[1:]:
            if g.p != p:
                raise DimensionMismatch(
                    f"group {g.group_id!r} has p={g.p}, expected p={p}"
                )
        for g in groups:
            require_n(g, 2, "a dataset group")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_arrays(
        cls, arrays: Sequence[Any], labels: Sequence[Hashable] | None = None
    ) -> "MultiGroupDataset":
        if labels is None:
            labels = list(range(1, len(arrays) + 1))
        if len(labels) != len(arrays):
            raise DimensionMismatch("labels and arrays differ in length")
        return cls(tuple(GroupSample(a, lab) for a, lab in zip(arrays, labels)))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return self.groups[0].p

    @property
    def ns(self) -> tuple[int, ...]:
        return tuple(g.n for g in self.groups)

    @property
    def total_n(self) -> int:
        return sum(self.ns)

    @property
    def labels(self) -> tuple[Hashable, ...]:
        return tuple(g.group_id for g in self.groups)

    def rows(self) -> list[tuple[Hashable, np.ndarray]]:
        """Flatten back to labeled rows (the input format of :func:`validate_dataset`)."""
        return [(g.group_id, row) for g in self.groups for row in g.data]

    def map(self, fn) -> "MultiGroupDataset":
        """Apply ``fn`` to every group's data matrix."""
        return MultiGroupDataset(
            tuple(GroupSample(fn(g.data), g.group_id) for g in self.groups)
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiGroupDataset):
            return NotImplemented
        return self.groups == other.groups

    def __hash__(self) -> int:
        return hash(self.groups)

    def __repr__(self) -> str:
        return f"MultiGroupDataset(k={self.k}, p={self.p}, n={self.ns})"


def validate_dataset(
    raw: "Iterable[tuple[Hashable, Sequence[float]]] | MultiGroupDataset",
) -> MultiGroupDataset:
    """Group labeled row vectors into a dataset, ordered by first appearance.

    Raises NonFinite, DimensionMismatch, TooFewGroups or TooFewObservations.
    """
    if isinstance(raw, MultiGroupDataset):
        raw = raw.rows()
    buckets: dict[Hashable, list[np.ndarray]] = {}
    width = None
    for lineno, (label, row) in enumerate(raw, start=1):
        vec = np.asarray(row, dtype=float).ravel()
        if width is None:
            width = vec.size
        elif vec.size != width:
            raise DimensionMismatch(
                f"row {lineno} (group {label!r}) has {vec.size} coordinates, "
                f"expected {width}"
            )
        if not np.all(np.isfinite(vec)):
            j = int(np.argmax(~np.isfinite(vec)))
            raise NonFinite(
                f"row {lineno} (group {label!r}): non-finite value at coordinate {j}"
            )
        buckets.setdefault(label, []).append(vec)
    if width == 0:
        raise DimensionMismatch("rows have no coordinates")
    if len(buckets) < 2:
        raise TooFewGroups(f"need at least 2 groups, got {len(buckets)}")
    for label, rows in buckets.items():
        if len(rows) < 2:
            raise TooFewObservations(
                f"group {label!r} has n={len(rows)}; need n >= 2"
            )
    return MultiGroupDataset(
        tuple(GroupSample(np.vstack(rows), label) for label, rows in buckets.items())
    )


@dataclass(frozen=True)
class TestOptions:
    alpha: float = 0.05
    estimator: EstimatorKind = EstimatorKind.UMVUE

    __test__ = False

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "estimator", EstimatorKind.parse(self.estimator))


@dataclass(frozen=True)
class TestOutcome:
    """Result of one standardized mean test (one-sided, upper tail)."""

    test_name: str
    statistic: float
    std_err: float
    z: float
    p_value: float
    alpha: float
    reject: bool
    estimator: str = "builtin"
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    __test__ = False

    def asdict(self) -> dict[str, Any]:
        out = asdict(self)
        out.pop("extra")
        return out


def finite_or_raise(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFinite(f"{what} is not finite ({value!r})")
    return float(value)
