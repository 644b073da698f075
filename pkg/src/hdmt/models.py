"""Synthetic data for the simulation study.

Observations follow X = Gamma z + mu with Gamma symmetric, Gamma^2 = Sigma, and
z a vector of i.i.d. standardized innovations.  Random streams are keyed by a
tuple (master_seed, experiment_id, replication, group) through numpy's
``SeedSequence`` feeding a counter-based Philox generator, so any replication
can be regenerated on its own and the order in which workers run is
irrelevant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import GroupSample
from .errors import DimensionMismatch, DomainError, NotPSD

#: spawn-key slot reserved for per-experiment draws (alternative means)
MEANS_SLOT = 2**32 - 1


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class CovarianceKind(str, enum.Enum):
    CASE1_IDENTITY = "case1"
    CASE2_STRUCTURED = "case2"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    kind: CovarianceKind
    p: int
    group_index: int = 1  # i in {1, 2, 3} for the structured case
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CovarianceKind(self.kind))
        if self.p < 1:
            raise DomainError(f"p must be >= 1, got {self.p}")
        if self.kind is CovarianceKind.CASE2_STRUCTURED and self.group_index not in (1, 2, 3):
            raise DomainError(f"structured case needs group index 1, 2 or 3, got {self.group_index}")
        if self.kind is CovarianceKind.EXPLICIT:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.p, self.p):
                raise DimensionMismatch(f"explicit matrix has shape {m.shape}, expected p={self.p}")
            if not np.array_equal(m, m.T):
                raise DomainError("explicit covariance matrix must be symmetric")
            object.__setattr__(self, "matrix", m)

    @classmethod
    def case1(cls, p: int) -> "CovarianceModel":
        return cls(CovarianceKind.CASE1_IDENTITY, p)

    @classmethod
    def case2(cls, p: int, i: int) -> "CovarianceModel":
        return cls(CovarianceKind.CASE2_STRUCTURED, p, group_index=i)

    @classmethod
    def explicit(cls, matrix) -> "CovarianceModel":
        m = np.asarray(matrix, dtype=float)
        return cls(CovarianceKind.EXPLICIT, m.shape[0], matrix=m)


def build_sigma(model: CovarianceModel) -> np.ndarray:
    p = model.p
    if model.kind is CovarianceKind.CASE1_IDENTITY:
        return np.eye(p)
    if model.kind is CovarianceKind.EXPLICIT:
        return model.matrix.copy()
    i = model.group_index
    j = np.arange(1, p + 1)
    w = 2.0 * i + (p - j + 1) / p
    lag = np.abs(j[:, None] - j[None, :]).astype(float)
    sign = np.where((j[:, None] + j[None, :]) % 2 == 0, 1.0, -1.0)
    psi = sign * (0.2 * i) ** (lag**0.1)
    np.fill_diagonal(psi, 1.0)
    sigma = w[:, None] * psi * w[None, :]
    # the two products round differently; keep the result exactly symmetric
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True)
class SymSqrt:
    gamma: np.ndarray
    clamped: int  # eigenvalues in [-tol * lambda_max, 0) set to zero


def sym_sqrt(sigma: np.ndarray, tol: float = 1e-8) -> SymSqrt:
    """Symmetric PSD square root via an eigendecomposition.

    Slightly negative eigenvalues (down to ``-tol * lambda_max``) are clamped
    to zero and counted; anything more negative raises NotPSD.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise DomainError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    top = max(float(vals[-1]), 0.0)
    floor = -tol * top
    if np.any(vals < floor):
        raise NotPSD(f"smallest eigenvalue {vals[0]:.3e} is below -tol * lambda_max = {floor:.3e}")
    clamped = int(np.sum(vals < 0.0))
    root = np.sqrt(np.clip(vals, 0.0, None))
    gamma = (vecs * root) @ vecs.T
    return SymSqrt(0.5 * (gamma + gamma.T), clamped)


class Innovation(str, enum.Enum):
    STD_NORMAL = "normal"
    CHI2_2_STD = "chi2_2"
    CHI2_8_STD = "chi2_8"

    @property
    def label(self) -> str:
        return {"normal": "N(0,1)", "chi2_2": "(chi2_2-2)/2", "chi2_8": "(chi2_8-8)/4"}[self.value]


def draw_innovations(dist: Innovation, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Matrix of i.i.d. mean-0, variance-1 innovations."""
    dist = Innovation(dist)
    if dist is Innovation.STD_NORMAL:
        return rng.standard_normal((rows, cols))
    df = 2 if dist is Innovation.CHI2_2_STD else 8
    z = rng.standard_normal((df, rows, cols))
    chi = np.einsum("drc,drc->rc", z, z)
    # chi2_df has mean df and variance 2 df
    return (chi - df) / np.sqrt(2.0 * df)


def gen_group(
    gamma: np.ndarray | None,
    mu: np.ndarray,
    n: int,
    dist: Innovation,
    rng: np.random.Generator,
    group_id=0,
) -> GroupSample:
    """n rows of gamma @ z + mu.  ``gamma=None`` means the identity."""
    mu = np.asarray(mu, dtype=float).ravel()
    p = mu.size
    z = draw_innovations(dist, n, p, rng)
    if gamma is None:
        x = z
    else:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (p, p):
            raise DimensionMismatch(f"gamma has shape {gamma.shape}, mu has length {p}")
        x = z @ gamma.T
    return GroupSample(x + mu, group_id)


@dataclass(frozen=True)
class AltMeanSpec:
    amplitude: float

    def __post_init__(self) -> None:
        if not self.amplitude >= 0.0:
            raise DomainError(f"amplitude must be >= 0, got {self.amplitude!r}")


def gen_alt_means(p: int, spec: AltMeanSpec, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """mu_1 = 0, mu_2 = u with u_i = (-1)^i v_i, v_i ~ U(0, a), mu_3 = -mu_2."""
    v = rng.uniform(0.0, 1.0, size=p) * spec.amplitude
    signs = np.where(np.arange(1, p + 1) % 2 == 0, 1.0, -1.0)
    u = signs * v
    return np.zeros(p), u, -u


def group_sizes(n_star: int, multipliers: Sequence[float]) -> tuple[int, ...]:
    sizes = []
    for m in multipliers:
        value = m * n_star
        if abs(value - round(value)) > 1e-9:
            raise DomainError(f"group size {m} * {n_star} is not an integer")
        sizes.append(int(round(value)))
    return tuple(sizes)
