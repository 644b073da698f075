"""Command-line entry point.

    hdmt test DATA.csv [--test our|bs|cq|sk] [--estimator umvue|une|cq] [--alpha A] [--json]
    hdmt estimate DATA.csv [--kind umvue|une|cq|une-direct] [--json]
    hdmt simulate {asl,power,convergence} CONFIG.json [--threads N] [--out DIR]
    hdmt quantile ALPHA

Exit status: 0 on success, 2 for bad data or configuration, 3 when the
statistic cannot be standardized (non-positive variance, singular scale).
Every error is one line on stderr starting with ``hdmt: error[<code>]:``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .data import EstimatorKind, MultiGroupDataset, TestOptions, validate_dataset
from .errors import DEGENERATE_ERRORS, HdmtError
from .harness import (
    CONVERGENCE_ESTIMATORS,
    SimConfig,
    convergence_csv,
    emit_table,
    results_csv,
    run_asl,
    run_estimator_convergence,
    run_power,
)
from .mean_tests import test_equal_means
from .normal import normal_upper_quantile
from .reference import t_bs, t_cq, t_sk
from .traces import (
    estimate_traces,
    tr_cross_une_direct,
    tr_sq_une_direct,
)

EXIT_OK, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3
ORACLE_MAX_N = 12
SEED_ENV = "HDMT_SEED"

#: full grid for --full-grid (several hours on one core)
FULL_GRID = {"p_list": [20, 50, 100, 500, 800], "n_star_list": [20, 50, 100, 200], "replications": 10000}


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int = EXIT_DATA):
        super().__init__(message)
        self.code = code
        self.status = status


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv(path: str | os.PathLike, header: bool | None = None) -> MultiGroupDataset:
    """Read ``group,x1,...,xp`` rows.  A header is detected when the second
    field of the first row is not numeric, unless ``header`` forces it."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise CliError("empty", f"{path} contains no rows")
    if header is None:
        header = len(rows[0]) > 1 and not _is_number(rows[0][1])
    if header:
        rows = rows[1:]
    raw = []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) < 2:
            raise CliError("dimension-mismatch", f"line {lineno}: need a label and at least one coordinate")
        try:
            values = [float(c) for c in row[1:]]
        except ValueError:
            raise CliError("parse", f"line {lineno}: non-numeric coordinate in {row[1:]!r}") from None
        raw.append((row[0].strip(), values))
    return validate_dataset(raw)


def load_schema(name: str) -> dict[str, Any]:
    return json.loads(resources.files("hdmt.schemas").joinpath(name).read_text())


def load_config(path: str) -> tuple[SimConfig, dict[str, Any]]:
    """Load a config file; bare names fall back to the bundled profiles."""
    p = Path(path)
    try:
        if p.exists():
            text = p.read_text(encoding="utf-8")
        else:
            bundled = resources.files("hdmt.configs").joinpath(p.name)
            if not bundled.is_file():
                raise CliError("config", f"config file {path} not found")
            text = bundled.read_text()
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(raw, dict):
        raw.pop("description", None)
    if SEED_ENV in os.environ:
        try:
            raw["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise CliError("config", f"{SEED_ENV} must be an integer") from None
    return SimConfig.from_dict(raw), raw


def _emit_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_test(args: argparse.Namespace) -> int:
    ds = read_csv(args.data, header=False if args.no_header else None)
    kind = EstimatorKind.parse(args.estimator)
    if args.test in ("bs", "cq") and ds.k != 2:
        raise CliError("too-few-groups" if ds.k < 2 else "group-count", f"--test {args.test} needs exactly 2 groups, got {ds.k}")
    if args.test == "our":
        out = test_equal_means(ds, TestOptions(args.alpha, kind))
    elif args.test == "bs":
        out = t_bs(*ds.groups, alpha=args.alpha)
    elif args.test == "cq":
        out = t_cq(*ds.groups, alpha=args.alpha)
    else:
        out = t_sk(ds, alpha=args.alpha)
    report = {
        "test": out.test_name,
        "statistic": out.statistic,
        "std_err": out.std_err,
        "z": out.z,
        "p_value": out.p_value,
        "alpha": out.alpha,
        "reject": out.reject,
        "estimator": out.estimator,
        "k": ds.k,
        "p": ds.p,
        "n": list(ds.ns),
    }
    if args.json:
        _emit_json(report)
    else:
        print(f"test        {out.test_name} (estimator: {out.estimator})")
        print(f"groups      k={ds.k}, p={ds.p}, n={list(ds.ns)}")
        print(f"statistic   {out.statistic:.6g}")
        print(f"std_err     {out.std_err:.6g}")
        print(f"z           {out.z:.6f}")
        print(f"p_value     {out.p_value:.6g}  (one-sided, upper tail)")
        verdict = "reject H0" if out.reject else "do not reject H0"
        print(f"decision    {verdict} at alpha={out.alpha:g}")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    ds = read_csv(args.data, header=False if args.no_header else None)
    labels = ds.labels
    if args.kind == "une-direct":
        big = [g for g in ds.groups if g.n > ORACLE_MAX_N]
        if big and not args.force:
            raise CliError(
                "oracle-too-large",
                f"une-direct enumerates O(n^6) tuples; group {big[0].group_id!r} has n={big[0].n} > {ORACLE_MAX_N} (use --force)",
            )
        tr_sq = [tr_sq_une_direct(g) for g in ds.groups]
        cross = {
            (i, j): tr_cross_une_direct(ds.groups[i], ds.groups[j])
            for i in range(ds.k)
            for j in range(i + 1, ds.k)
        }
        kind_name = "une-direct"
    else:
        est = estimate_traces(ds, EstimatorKind.parse(args.kind))
        tr_sq, cross, kind_name = list(est.tr_sq), est.tr_cross, est.kind.value
    report = {
        "kind": kind_name,
        "k": ds.k,
        "p": ds.p,
        "n": list(ds.ns),
        "tr_sq": [{"group": str(lab), "value": v} for lab, v in zip(labels, tr_sq)],
        "tr_cross": [
            {"groups": [str(labels[i]), str(labels[j])], "value": v}
            for (i, j), v in sorted(cross.items())
        ],
    }
    if args.json:
        _emit_json(report)
    else:
        print(f"estimator   {kind_name}; k={ds.k}, p={ds.p}, n={list(ds.ns)}")
        for item in report["tr_sq"]:
            print(f"tr(Sigma_{item['group']}^2)\t{item['value']:.10g}")
        for item in report["tr_cross"]:
            a, b = item["groups"]
            print(f"tr(Sigma_{a} Sigma_{b})\t{item['value']:.10g}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg, raw = load_config(args.config)
    if args.full_grid:
        cfg = cfg.replace(**FULL_GRID)
    threads = args.threads if args.threads is not None else cfg.threads
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    written = []
    if args.mode == "convergence":
        series = run_estimator_convergence(cfg, threads=threads)
        for name in CONVERGENCE_ESTIMATORS:
            path = out / f"convergence_{name}.csv"
            path.write_text(convergence_csv([s for s in series if s.estimator == name]))
            written.append(path.name)
    else:
        runner = run_asl if args.mode == "asl" else run_power
        results = runner(cfg, threads=threads)
        (out / "results.csv").write_text(results_csv(results))
        (out / "table.md").write_text(emit_table(results, "markdown"))
        written += ["results.csv", "table.md"]
    meta = {
        "mode": args.mode,
        "config": cfg.to_dict(),
        "master_seed": cfg.master_seed,
        "seed_from_env": SEED_ENV in os.environ,
        "threads": threads,
        "versions": {"hdmt": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_time_seconds": round(time.perf_counter() - start, 3),
        "degenerate_policy": "replications raising NonPositiveVariance, SingularScale or "
        "NegativeDenominator are counted as degenerate and excluded from the rate denominator",
        "files": written,
    }
    (out / "run_metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_quantile(args: argparse.Namespace) -> int:
    print(f"{normal_upper_quantile(args.alpha):.10f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdmt",
        description="Tests for equality of high-dimensional mean vectors with unequal covariances.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run a mean test on a CSV file (one-sided p-value)")
    p_test.add_argument("data", help="CSV with rows group,x1,...,xp")
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--estimator", choices=["umvue", "une", "cq"], default="umvue")
    p_test.add_argument("--test", choices=["our", "bs", "cq", "sk"], default="our")
    p_test.add_argument("--json", action="store_true", help="emit a JSON object")
    p_test.add_argument("--no-header", action="store_true", help="never treat the first row as a header")
    p_test.set_defaults(func=cmd_test)

    p_est = sub.add_parser("estimate", help="estimate tr(Sigma_i^2) and tr(Sigma_i Sigma_j)")
    p_est.add_argument("data")
    p_est.add_argument("--kind", choices=["umvue", "une", "cq", "une-direct"], default="umvue")
    p_est.add_argument("--force", action="store_true", help=f"allow une-direct above n={ORACLE_MAX_N}")
    p_est.add_argument("--json", action="store_true")
    p_est.add_argument("--no-header", action="store_true")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    p_sim.add_argument("mode", choices=["asl", "power", "convergence"])
    p_sim.add_argument("config", help="config path, or the name of a bundled profile")
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--out", default="results")
    p_sim.add_argument(
        "--full-grid",
        action="store_true",
        help="use the full p x n* grid with 10000 replications (hours of runtime)",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_q = sub.add_parser("quantile", help="upper-alpha standard normal quantile")
    p_q.add_argument("alpha", type=float)
    p_q.set_defaults(func=cmd_quantile)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    print(f"hdmt: error[{code}]: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.threads is not None and args.threads < 1:
        return _fail("config", "--threads must be >= 1", EXIT_DATA)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc), exc.status)
    except DEGENERATE_ERRORS as exc:
        return _fail(exc.code, str(exc), EXIT_DEGENERATE)
    except HdmtError as exc:
        return _fail(exc.code, str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
