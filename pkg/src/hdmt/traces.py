"""Sample moments and estimators of tr(Sigma_i^2) and tr(Sigma_i Sigma_j).

Three families are provided:

* UMVUE: the normal-theory unbiased estimator of tr(Sigma^2) and the plug-in
  tr(S_i S_j) for the cross term.
* UNE: distribution-free U-statistics.  ``tr_sq_une_fast`` is the O(n^2 p)
  Gram-matrix evaluation; ``tr_sq_une_direct`` and ``tr_cross_une_direct``
  enumerate every index tuple and exist only as test oracles (O(n^6 p) and
  O(n^3 m^3 p)).
* Chen-Qin leave-out estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .data import (
    EstimatorKind,
    GroupSample,
    MultiGroupDataset,
    require_n,
    require_same_p,
)
from .errors import HdmtError

MIN_N = {EstimatorKind.UMVUE: 3, EstimatorKind.UNE: 6, EstimatorKind.CHEN_QIN: 4}


def sample_mean(g: GroupSample) -> np.ndarray:
    return g.data.mean(axis=0)


def centered(g: GroupSample) -> np.ndarray:
    return g.data - sample_mean(g)


def sample_covariance(g: GroupSample) -> np.ndarray:
    """Unbiased sample covariance (divisor n - 1)."""
    require_n(g, 2, "sample covariance")
    xc = centered(g)
    s = xc.T @ xc / (g.n - 1)
    return 0.5 * (s + s.T)


def _trace_and_frob(g: GroupSample) -> tuple[float, float]:
    """Return (tr S, tr S^2) without forming S when n < p."""
    xc = centered(g)
    d = g.n - 1
    if g.n <= g.p:
        gram = xc @ xc.T
        return float(np.trace(gram)) / d, float(np.sum(gram * gram)) / d**2
    s = xc.T @ xc
    return float(np.trace(s)) / d, float(np.sum(s * s)) / d**2


def tr_sq_umvue(g: GroupSample) -> float:
    """(n-1)^2/((n+1)(n-2)) * (tr S^2 - (tr S)^2/(n-1))."""
    require_n(g, 3, "the UMVUE of tr(Sigma^2)")
    n = g.n
    tr_s, tr_s2 = _trace_and_frob(g)
    return (n - 1) ** 2 / ((n + 1) * (n - 2)) * (tr_s2 - tr_s**2 / (n - 1))


def tr_cross_plugin(a: GroupSample, b: GroupSample) -> float:
    """tr(S_a S_b), evaluated as a sum of squared cross inner products."""
    require_same_p(a, b)
    require_n(a, 2, "sample covariance")
    require_n(b, 2, "sample covariance")
    # tr(S_a S_b) = ||Xa_c Xb_c'||_F^2 / ((n_a - 1)(n_b - 1)); pick the cheaper route
    if a.n * b.n <= a.p * (a.n + b.n):
        cross = centered(a) @ centered(b).T
        return float(np.sum(cross * cross)) / ((a.n - 1) * (b.n - 1))
    return float(np.sum(sample_covariance(a) * sample_covariance(b)))


def gram_off_diagonal(x: np.ndarray) -> np.ndarray:
    """Gram matrix of the rows of ``x`` with its diagonal set to zero."""
    theta = x @ x.T
    theta = 0.5 * (theta + theta.T)
    np.fill_diagonal(theta, 0.0)
    return theta


def tr_sq_une_fast(g: GroupSample) -> float:
    """Gram-matrix form of the six-index U-statistic for tr(Sigma^2).

    Uses signed sums of the off-diagonal Gram entries.  The U-statistic is
    exactly location invariant, so rows are centered first; this is the same
    value and avoids cancellation when the mean is large.
    """
    require_n(g, 6, "the UNE of tr(Sigma^2)")
    n = g.n
    x = centered(g)
    if n <= g.p:
        theta = gram_off_diagonal(x)
        q2 = float(np.sum(theta * theta))
        rows = theta.sum(axis=1)
    else:
        # same sums through the p x p cross-product, O(n p^2) instead of O(n^2 p)
        norms = np.einsum("ij,ij->i", x, x)
        xtx = x.T @ x
        q2 = float(np.sum(xtx * xtx)) - float(np.sum(norms * norms))
        rows = x @ x.sum(axis=0) - norms
    q12 = float(np.sum(rows * rows))
    q1 = float(np.sum(rows))
    return (
        q2 / (n * (n - 3))
        - 2.0 * q12 / (n * (n - 2) * (n - 3))
        + q1 * q1 / (n * (n - 1) * (n - 2) * (n - 3))
    )


def tr_sq_une_direct(g: GroupSample) -> float:
    """Enumerate all ordered 6-tuples of distinct indices.  Test oracle only."""
    require_n(g, 6, "the UNE of tr(Sigma^2)")
    x = g.data
    n = g.n
    # every factor is an inner product of two row differences, so the sum can
    # be taken over Gram entries G[a, b] = x_a . x_b
    gm = x @ x.T

    def ip(i, j, k, l):  # (x_i - x_j)'(x_k - x_l)
        return gm[i, k] - gm[i, l] - gm[j, k] + gm[j, l]

    total = 0.0
    for k1, k2, k3, k4, k5, k6 in permutations(range(n), 6):
        total += ip(k1, k2, k3, k4) * ip(k3, k5, k1, k6)
    return total / _falling(n, 6)


def tr_cross_une_direct(a: GroupSample, b: GroupSample) -> float:
    """Enumerate distinct triples from each group.  Test oracle only."""
    require_same_p(a, b)
    require_n(a, 3, "the UNE of tr(Sigma_i Sigma_j)")
    require_n(b, 3, "the UNE of tr(Sigma_i Sigma_j)")
    cross = a.data @ b.data.T  # cross[i, j] = xa_i . xb_j

    def ip(i1, i2, j1, j2):  # (xa_i1 - xa_i2)'(xb_j1 - xb_j2)
        return cross[i1, j1] - cross[i1, j2] - cross[i2, j1] + cross[i2, j2]

    a_triples = list(permutations(range(a.n), 3))
    b_triples = list(permutations(range(b.n), 3))
    total = 0.0
    for k1, k2, k3 in a_triples:
        for k4, k5, k6 in b_triples:
            total += ip(k1, k2, k4, k5) * ip(k1, k3, k4, k6)
    return total / (_falling(a.n, 3) * _falling(b.n, 3))


def _falling(n: int, l: int) -> int:
    out = 1
    for i in range(l):
        out *= n - i
    return out


def cq_tr_sq(g: GroupSample) -> float:
    """Chen-Qin estimator of tr(Sigma^2) with leave-two-out means."""
    require_n(g, 4, "the Chen-Qin estimator of tr(Sigma^2)")
    n = g.n
    x = g.data
    gm = x @ x.T
    gm = 0.5 * (gm + gm.T)
    diag = np.diag(gm)
    rows = gm.sum(axis=1)
    # x_j . mean_{-(j,k)} = (rows_j - G_jj - G_jk) / (n - 2)
    proj = (rows[:, None] - diag[:, None] - gm) / (n - 2)
    # term_{jk} = x_j'(x_k - m_jk) * x_k'(x_j - m_jk)
    left = gm - proj
    terms = left * left.T
    np.fill_diagonal(terms, 0.0)
    return float(np.sum(terms)) / (n * (n - 1))


def cq_tr_cross(a: GroupSample, b: GroupSample) -> float:
    """Chen-Qin estimator of tr(Sigma_a Sigma_b) with leave-one-out means."""
    require_same_p(a, b)
    require_n(a, 2, "the Chen-Qin cross estimator")
    require_n(b, 2, "the Chen-Qin cross estimator")
    # x_l - mean_{-(l)} = (n x_l - total) / (n - 1)
    da = (a.n * a.data - a.data.sum(axis=0)) / (a.n - 1)
    db = (b.n * b.data - b.data.sum(axis=0)) / (b.n - 1)
    m1 = a.data @ db.T  # x_al . (x_bk - mean_b(k))
    m2 = da @ b.data.T  # (x_al - mean_a(l)) . x_bk
    return float(np.sum(m1 * m2)) / (a.n * b.n)


@dataclass(frozen=True)
class TraceEstimates:
    """Estimates of tr(Sigma_i^2) per group and tr(Sigma_i Sigma_j) for i < j."""

    tr_sq: tuple[float, ...]
    tr_cross: dict[tuple[int, int], float]
    kind: EstimatorKind

    def cross(self, i: int, j: int) -> float:
        return self.tr_cross[(i, j) if i < j else (j, i)]


_TR_SQ = {
    EstimatorKind.UMVUE: tr_sq_umvue,
    EstimatorKind.UNE: tr_sq_une_fast,
    EstimatorKind.CHEN_QIN: cq_tr_sq,
}


def estimate_traces(ds: MultiGroupDataset, kind: EstimatorKind) -> TraceEstimates:
    kind = EstimatorKind.parse(kind)
    for g in ds.groups:
        require_n(g, MIN_N[kind], f"estimator kind {kind.value!r}")
    tr_sq = []
    for g in ds.groups:
        try:
            tr_sq.append(_TR_SQ[kind](g))
        except HdmtError as exc:
            raise type(exc)(f"group {g.group_id!r}: {exc}") from exc
    cross_fn = cq_tr_cross if kind is EstimatorKind.CHEN_QIN else tr_cross_plugin
    tr_cross = {}
    for i in range(ds.k):
        for j in range(i + 1, ds.k):
            tr_cross[(i, j)] = cross_fn(ds.groups[i], ds.groups[j])
    return TraceEstimates(tuple(tr_sq), tr_cross, kind)
