"""Monte Carlo engine for size, power and estimator-convergence experiments.

One replication generates all groups of a cell and runs every configured test
on that same dataset.  Replications are independent tasks; each draws from its
own keyed random stream and writes into a pre-sized slot, and the slots are
reduced in index order.  Output therefore does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .data import EstimatorKind, MultiGroupDataset, TestOptions
from .errors import DEGENERATE_ERRORS, ConfigError, UnknownFormat
from .mean_tests import asymptotic_power, mu_quadratic, test_equal_means, variance_from_traces
from .models import (
    MEANS_SLOT,
    AltMeanSpec,
    CovarianceModel,
    Innovation,
    build_sigma,
    gen_alt_means,
    gen_group,
    group_sizes,
    stream,
    sym_sqrt,
)
from .normal import normal_upper_quantile
from .reference import t_bs, t_cq, t_sk
from .traces import MIN_N, tr_cross_plugin, tr_sq_umvue, tr_sq_une_fast

TEST_NAMES = ("our_umvue", "our_une", "bs", "cq", "sk")
CASES = ("case1", "case2")


def _our(kind: EstimatorKind):
    def run(ds: MultiGroupDataset, alpha: float) -> float:
        return test_equal_means(ds, TestOptions(alpha, kind)).z

    return run


_RUNNERS: dict[str, Callable[[MultiGroupDataset, float], float]] = {
    "our_umvue": _our(EstimatorKind.UMVUE),
    "our_une": _our(EstimatorKind.UNE),
    "bs": lambda ds, a: t_bs(ds.groups[0], ds.groups[1], a).z,
    "cq": lambda ds, a: t_cq(ds.groups[0], ds.groups[1], a).z,
    "sk": lambda ds, a: t_sk(ds, a).z,
}

# smallest group size each test accepts
_MIN_GROUP = {"our_umvue": MIN_N[EstimatorKind.UMVUE], "our_une": MIN_N[EstimatorKind.UNE], "bs": 2, "cq": 4, "sk": 2}


@dataclass(frozen=True)
class SimConfig:
    """A full experiment description; mirrors the JSON config file."""

    p_list: tuple[int, ...] = (20, 50, 100)
    n_star_list: tuple[int, ...] = (50, 100)
    k: int = 3
    group_size_multipliers: tuple[float, ...] = (0.5, 1.0, 1.5)
    distributions: tuple[str, ...] = ("normal", "chi2_2", "chi2_8")
    covariance_case: str = "case1"
    amplitude: float = 0.0
    alpha: float = 0.05
    replications: int = 2000
    master_seed: int = 20140101
    tests: tuple[str, ...] = ("our_umvue", "our_une", "sk")
    threads: int | None = None
    redraw_means: bool = False
    n_grid: tuple[int, ...] = (10, 50, 200, 1000)

    def __post_init__(self) -> None:
        for name in ("p_list", "n_star_list", "group_size_multipliers", "distributions", "tests", "n_grid"):
            value = getattr(self, name)
            if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
                raise ConfigError(f"{name}: expected a list, got {value!r}")
            object.__setattr__(self, name, tuple(value))
        if self.k < 2:
            raise ConfigError(f"k: need at least 2 groups, got {self.k}")
        if len(self.group_size_multipliers) != self.k:
            raise ConfigError(
                f"group_size_multipliers: expected {self.k} values, got {len(self.group_size_multipliers)}"
            )
        if self.covariance_case not in CASES:
            raise ConfigError(f"covariance_case: expected one of {CASES}, got {self.covariance_case!r}")
        if self.covariance_case == "case2" and self.k > 3:
            raise ConfigError("covariance_case: case2 is defined for at most 3 groups")
        for d in self.distributions:
            try:
                Innovation(d)
            except ValueError:
                raise ConfigError(
                    f"distributions: unknown distribution {d!r}; use one of "
                    f"{[i.value for i in Innovation]}"
                ) from None
        for t in self.tests:
            if t not in TEST_NAMES:
                raise ConfigError(f"tests: unknown test {t!r}; use one of {list(TEST_NAMES)}")
            if t in ("bs", "cq") and self.k != 2:
                raise ConfigError(f"tests: {t!r} is a two-sample test but k={self.k}")
        if not self.amplitude >= 0.0:
            raise ConfigError(f"amplitude: must be >= 0, got {self.amplitude!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha: must lie in (0, 1), got {self.alpha!r}")
        if self.replications < 1:
            raise ConfigError(f"replications: must be >= 1, got {self.replications}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        if any(p < 1 for p in self.p_list):
            raise ConfigError("p_list: dimensions must be >= 1")
        for n_star in self.n_star_list:
            try:
                sizes = group_sizes(n_star, self.group_size_multipliers)
            except ValueError as exc:
                raise ConfigError(f"n_star_list: {exc}") from None
            for t in self.tests:
                if min(sizes) < _MIN_GROUP[t]:
                    raise ConfigError(
                        f"n_star_list: n*={n_star} gives group sizes {sizes}, "
                        f"too small for test {t!r} (needs {_MIN_GROUP[t]})"
                    )
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigError("n_grid: must be strictly increasing")
        if self.n_grid and self.n_grid[0] < MIN_N[EstimatorKind.UNE]:
            raise ConfigError(f"n_grid: sizes must be >= {MIN_N[EstimatorKind.UNE]}")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SimConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    def replace(self, **changes: Any) -> "SimConfig":
        d = asdict(self)
        d.update(changes)
        return SimConfig(**d)


@dataclass(frozen=True)
class TestTally:
    rejections: int
    degenerate: int
    replications: int
    z_values: tuple[float, ...] = field(default=(), repr=False, compare=False)

    __test__ = False

    @property
    def valid(self) -> int:
        return self.replications - self.degenerate

    @property
    def rate(self) -> float:
        return self.rejections / self.valid if self.valid else float("nan")


@dataclass(frozen=True)
class CellResult:
    case: str
    distribution: str
    p: int
    n_star: int
    group_sizes: tuple[int, ...]
    amplitude: float
    tallies: dict[str, TestTally]
    theoretical_power: float | None = None
    clamped_eigenvalues: int = 0

    def rate(self, test: str) -> float:
        return self.tallies[test].rate


@dataclass(frozen=True)
class _Cell:
    case: str
    dist: Innovation
    p: int
    n_star: int
    sizes: tuple[int, ...]
    exp_id: int
    gammas: tuple[np.ndarray | None, ...]
    sigmas: tuple[np.ndarray, ...]
    clamped: int


def experiment_id(*parts: Any) -> int:
    """Stable integer id for a cell, independent of mode and amplitude."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def _covariances(case: str, p: int, k: int) -> tuple[tuple, tuple, int]:
    if case == "case1":
        eye = np.eye(p)
        return (None,) * k, (eye,) * k, 0
    gammas, sigmas, clamped = [], [], 0
    for i in range(1, k + 1):
        sigma = build_sigma(CovarianceModel.case2(p, i))
        root = sym_sqrt(sigma)
        gammas.append(root.gamma)
        sigmas.append(sigma)
        clamped += root.clamped
    return tuple(gammas), tuple(sigmas), clamped


def _cells(cfg: SimConfig) -> list[_Cell]:
    cells = []
    cache: dict[int, tuple] = {}
    for p in cfg.p_list:
        if p not in cache:
            cache[p] = _covariances(cfg.covariance_case, p, cfg.k)
        gammas, sigmas, clamped = cache[p]
        for n_star in cfg.n_star_list:
            sizes = group_sizes(n_star, cfg.group_size_multipliers)
            for d in cfg.distributions:
                dist = Innovation(d)
                eid = experiment_id(cfg.covariance_case, p, n_star, dist.value, cfg.k)
                cells.append(_Cell(cfg.covariance_case, dist, p, n_star, sizes, eid, gammas, sigmas, clamped))
    return cells


def _means(cfg: SimConfig, cell: _Cell, rep: int | None) -> tuple[np.ndarray, ...]:
    if cfg.amplitude == 0.0:
        return tuple(np.zeros(cell.p) for _ in range(cfg.k))
    key = (cell.exp_id, MEANS_SLOT) if rep is None else (cell.exp_id, rep, MEANS_SLOT)
    mus = gen_alt_means(cell.p, AltMeanSpec(cfg.amplitude), stream(cfg.master_seed, *key))
    if cfg.k == len(mus):
        return mus
    # other k: mu_1 = 0, then alternate u and -u
    return tuple(mus[0] if i == 0 else (mus[1] if i % 2 else mus[2]) for i in range(cfg.k))


def generate_dataset(cfg: SimConfig, cell: _Cell, rep: int, mus) -> MultiGroupDataset:
    groups = []
    for g, (n, gamma, mu) in enumerate(zip(cell.sizes, cell.gammas, mus)):
        rng = stream(cfg.master_seed, cell.exp_id, rep, g)
        groups.append(gen_group(gamma, mu, n, cell.dist, rng, group_id=g + 1))
    return MultiGroupDataset(tuple(groups))


def _replicate(cfg: SimConfig, cell: _Cell, rep: int, fixed_mus) -> list[float]:
    mus = _means(cfg, cell, rep) if cfg.redraw_means else fixed_mus
    ds = generate_dataset(cfg, cell, rep, mus)
    out = []
    for t in cfg.tests:
        try:
            out.append(_RUNNERS[t](ds, cfg.alpha))
        except DEGENERATE_ERRORS:
            out.append(math.nan)
    return out


def _workers(cfg: SimConfig, threads: int | None) -> int:
    n = threads if threads is not None else cfg.threads
    return max(1, n if n is not None else (os.cpu_count() or 1))


def parallel_slots(fn: Callable[[int], Any], count: int, workers: int) -> list[Any]:
    """Evaluate fn(0..count-1) into an index-ordered slot list."""
    slots: list[Any] = [None] * count
    if workers <= 1 or count <= 1:
        for i in range(count):
            slots[i] = fn(i)
        return slots
    chunk = max(1, count // (workers * 4))

    def run(start: int) -> None:
        for i in range(start, min(start + chunk, count)):
            slots[i] = fn(i)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(0, count, chunk)))
    return slots


def _theoretical_power(cfg: SimConfig, cell: _Cell, mus) -> float:
    tr_sq = [float(np.sum(s * s)) for s in cell.sigmas]
    tr_cross = {
        (i, j): float(np.sum(cell.sigmas[i] * cell.sigmas[j]))
        for i in range(cfg.k)
        for j in range(i + 1, cfg.k)
    }
    sigma_n = math.sqrt(variance_from_traces(cell.sizes, tr_sq, tr_cross).sigma_sq_hat)
    return asymptotic_power(mu_quadratic(mus), sigma_n, cfg.alpha)


def _run_cells(cfg: SimConfig, threads: int | None, with_power: bool) -> list[CellResult]:
    xi = normal_upper_quantile(cfg.alpha)
    workers = _workers(cfg, threads)
    results = []
    for cell in _cells(cfg):
        fixed = _means(cfg, cell, None)
        slots = parallel_slots(lambda r: _replicate(cfg, cell, r, fixed), cfg.replications, workers)
        zs = np.array(slots, dtype=float).reshape(cfg.replications, len(cfg.tests))
        tallies = {}
        for col, t in enumerate(cfg.tests):
            z = zs[:, col]
            bad = np.isnan(z)
            tallies[t] = TestTally(
                rejections=int(np.sum(z[~bad] > xi)),
                degenerate=int(np.sum(bad)),
                replications=cfg.replications,
                z_values=tuple(z.tolist()),
            )
        power = None
        if with_power and not cfg.redraw_means:
            power = _theoretical_power(cfg, cell, fixed)
        results.append(
            CellResult(
                case=cell.case,
                distribution=cell.dist.value,
                p=cell.p,
                n_star=cell.n_star,
                group_sizes=cell.sizes,
                amplitude=cfg.amplitude,
                tallies=tallies,
                theoretical_power=power,
                clamped_eigenvalues=cell.clamped,
            )
        )
    return results


def run_asl(cfg: SimConfig, threads: int | None = None) -> list[CellResult]:
    """Empirical size under H0 (all means zero; any amplitude is ignored)."""
    return _run_cells(cfg.replace(amplitude=0.0), threads, with_power=False)


def run_power(cfg: SimConfig, threads: int | None = None) -> list[CellResult]:
    """Empirical power under the alternative means, with the asymptotic power
    of T_our from the true covariance traces alongside."""
    return _run_cells(cfg, threads, with_power=True)


@dataclass(frozen=True)
class ConvergenceSeries:
    """Mean and spread of (estimate - truth)/p over replications, per n."""

    estimator: str
    distribution: str
    case: str
    p: int
    n_grid: tuple[int, ...]
    bias: tuple[float, ...]  # mean of (estimate - true) / p
    rmse: tuple[float, ...]  # root mean square of (estimate - true) / p
    std_error: tuple[float, ...]  # Monte Carlo standard error of ``bias``
    true_value: float  # true / p


CONVERGENCE_ESTIMATORS = ("tr_sq_umvue", "tr_sq_une", "tr_cross_plugin")


def run_estimator_convergence(cfg: SimConfig, threads: int | None = None) -> list[ConvergenceSeries]:
    """Finite-sample behaviour of the trace estimators for group 1 (and groups
    1, 2 for the cross term) at p = p_list[0], n_1 = n_2 = n over ``n_grid``."""
    p = cfg.p_list[0]
    gammas, sigmas, _ = _covariances(cfg.covariance_case, p, 2)
    true_sq = float(np.sum(sigmas[0] * sigmas[0])) / p
    true_cross = float(np.sum(sigmas[0] * sigmas[1])) / p
    truth = (true_sq, true_sq, true_cross)
    workers = _workers(cfg, threads)
    series = []
    zero = np.zeros(p)
    for d in cfg.distributions:
        dist = Innovation(d)
        per_n = []
        for n in cfg.n_grid:
            eid = experiment_id("convergence", cfg.covariance_case, p, n, dist.value)

            def one(rep: int) -> tuple[float, float, float]:
                g1 = gen_group(gammas[0], zero, n, dist, stream(cfg.master_seed, eid, rep, 0), 1)
                g2 = gen_group(gammas[1], zero, n, dist, stream(cfg.master_seed, eid, rep, 1), 2)
                return (
                    tr_sq_umvue(g1) / p - true_sq,
                    tr_sq_une_fast(g1) / p - true_sq,
                    tr_cross_plugin(g1, g2) / p - true_cross,
                )

            per_n.append(np.array(parallel_slots(one, cfg.replications, workers)))
        for col, name in enumerate(CONVERGENCE_ESTIMATORS):
            devs = [arr[:, col] for arr in per_n]
            r = cfg.replications
            series.append(
                ConvergenceSeries(
                    estimator=name,
                    distribution=dist.value,
                    case=cfg.covariance_case,
                    p=p,
                    n_grid=tuple(cfg.n_grid),
                    bias=tuple(float(np.mean(v)) for v in devs),
                    rmse=tuple(float(np.sqrt(np.mean(v * v))) for v in devs),
                    std_error=tuple(
                        float(np.std(v, ddof=1) / math.sqrt(r)) if r > 1 else math.nan for v in devs
                    ),
                    true_value=truth[col],
                )
            )
    return series


# ---------------------------------------------------------------- rendering

RESULT_COLUMNS = (
    "case",
    "distribution",
    "p",
    "n_star",
    "group_sizes",
    "amplitude",
    "test",
    "replications",
    "rejections",
    "degenerate",
    "rate",
    "theoretical_power",
    "clamped_eigenvalues",
)


def result_rows(results: Sequence[CellResult]) -> list[dict[str, str]]:
    rows = []
    for cell in results:
        for test, tally in cell.tallies.items():
            rows.append(
                {
                    "case": cell.case,
                    "distribution": cell.distribution,
                    "p": str(cell.p),
                    "n_star": str(cell.n_star),
                    "group_sizes": "/".join(str(n) for n in cell.group_sizes),
                    "amplitude": repr(cell.amplitude),
                    "test": test,
                    "replications": str(tally.replications),
                    "rejections": str(tally.rejections),
                    "degenerate": str(tally.degenerate),
                    "rate": f"{tally.rate:.4f}",
                    "theoretical_power": ""
                    if cell.theoretical_power is None
                    else f"{cell.theoretical_power:.4f}",
                    "clamped_eigenvalues": str(cell.clamped_eigenvalues),
                }
            )
    return rows


def results_csv(results: Sequence[CellResult]) -> str:
    """Long format: one row per cell per test."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(result_rows(results))
    return buf.getvalue()


def convergence_csv(series: Sequence[ConvergenceSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "case", "distribution", "p", "n", "bias", "rmse", "std_error", "true_value"])
    for s in series:
        for n, b, e, se in zip(s.n_grid, s.bias, s.rmse, s.std_error):
            w.writerow([s.estimator, s.case, s.distribution, s.p, n, f"{b:.6g}", f"{e:.6g}", f"{se:.6g}", f"{s.true_value:.6g}"])
    return buf.getvalue()


def emit_table(results: Sequence[CellResult], format: str = "markdown") -> str:
    """Render rejection rates in the layout of a size/power table.

    Rows are (p, n*); columns are grouped by distribution with one sub-column
    per test.  ``format`` is ``csv``, ``tsv`` or ``markdown``.
    """
    if not results:
        raise ValueError("no results to render")
    if format not in ("csv", "tsv", "markdown"):
        raise UnknownFormat(f"unknown table format {format!r}; use csv, tsv or markdown")
    dists: list[str] = []
    tests: list[str] = []
    keys: list[tuple[int, int]] = []
    table: dict[tuple[int, int, str, str], float] = {}
    for cell in results:
        if cell.distribution not in dists:
            dists.append(cell.distribution)
        if (cell.p, cell.n_star) not in keys:
            keys.append((cell.p, cell.n_star))
        for t in cell.tallies:
            if t not in tests:
                tests.append(t)
            table[(cell.p, cell.n_star, cell.distribution, t)] = cell.rate(t)
    columns = [(d, t) for d in dists for t in tests]

    def fmt(p, n_star, d, t) -> str:
        v = table.get((p, n_star, d, t))
        return "" if v is None else f"{v:.4f}"

    if format in ("csv", "tsv"):
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="," if format == "csv" else "\t", lineterminator="\n")
        w.writerow(["p", "n_star"] + [f"{d}:{t}" for d, t in columns])
        for p, n_star in keys:
            w.writerow([p, n_star] + [fmt(p, n_star, d, t) for d, t in columns])
        return buf.getvalue()

    header1 = ["p", "n*"] + [Innovation(d).label if i == 0 else "" for d in dists for i, _ in enumerate(tests)]
    header2 = ["", ""] + [t for _ in dists for t in tests]
    body = []
    last_p = None
    for p, n_star in keys:
        body.append([str(p) if p != last_p else "", str(n_star)] + [fmt(p, n_star, d, t) for d, t in columns])
        last_p = p
    widths = [max(len(r[i]) for r in [header1, header2] + body) for i in range(len(header1))]

    def line(cells: list[str]) -> str:
        return "| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |"

    out = [line(header1), line(header2), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out.extend(line(r) for r in body)
    return "\n".join(out) + "\n"
