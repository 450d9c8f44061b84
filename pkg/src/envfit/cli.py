"""Command-line front end.

Three subcommands: `fit` estimates a response envelope from X/Y CSV files,
`select` picks the envelope dimension by cross-validation, and `simulate`
runs a benchmark scenario and emits its summary table. CSV inputs are
headerless numeric by default (--header skips one line). Exit codes: 0
success, 2 input error, 3 numerical failure. Logs go to standard error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import CsvParseError, EnvfitError, InvalidInput
from .linalg import subspace_angle_deg
from .regression import RegressionData, cv_select_u, fit_response_envelope, response_moments
from .simlab import SCENARIO_IDS, emit_table, make_scenario, run_replications
from .solver import SolverOptions

log = logging.getLogger("envfit")


def read_matrix_csv(path: str, skip_header: bool = False) -> np.ndarray:
    """Parse a comma-separated numeric matrix, naming the bad cell on failure."""
    rows = []
    width = None
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise CsvParseError(f"{path}: cannot open ({exc})") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if skip_header and line_no == 1:
                continue
            text = line.strip()
            if not text:
                continue
            cells = text.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise CsvParseError(
                    f"{path}: line {line_no} has {len(cells)} fields, expected {width}"
                )
            parsed = []
            for col_no, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvParseError(
                        f"{path}: line {line_no}, column {col_no}: cannot parse {cell.strip()!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def write_matrix_csv(path: str, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in np.atleast_2d(matrix):
            handle.write(",".join(repr(float(v)) for v in row) + "\n")


def _solver_options(args) -> SolverOptions:
    return SolverOptions(
        max_sweeps=args.max_sweeps,
        rel_tol=args.rel_tol,
        mode=args.mode,
    )


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("ENVFIT_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInput(f"ENVFIT_THREADS={env!r} is not an integer") from None
    return 1


def _parse_u_range(text: str, r: int):
    """Accept 'LO:HI' (inclusive), a comma list, or a single integer."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            values = list(range(int(lo), int(hi) + 1))
        elif "," in text:
            values = [int(tok) for tok in text.split(",") if tok.strip()]
        else:
            values = [int(text)]
    except ValueError:
        raise InvalidInput(f"cannot parse u range {text!r}") from None
    if not values or any(v < 0 or v > r for v in values):
        raise InvalidInput(f"u range {text!r} outside 0..{r}")
    return values


def cmd_fit(args) -> int:
    x = read_matrix_csv(args.x_csv, args.header)
    y = read_matrix_csv(args.y_csv, args.header)
    data = RegressionData(x, y)
    if args.ols:
        mom = response_moments(data)
        beta = mom.b
        summary = [
            ("estimator", "ols"),
            ("n", data.n),
            ("p", data.p),
            ("r", data.r),
        ]
        gamma = None
        env = None
    else:
        if args.u is None:
            raise InvalidInput("fit requires -u (or --ols)")
        env = fit_response_envelope(data, args.u, _solver_options(args))
        beta = env.beta_hat
        fit = env.fit
        if fit.start is not None:
            start_angle = subspace_angle_deg(fit.start.basis, fit.gamma_hat)
            start_criterion = fit.start.criterion
        else:
            start_angle = 0.0
            start_criterion = "none"
        summary = [
            ("estimator", "envelope"),
            ("n", data.n),
            ("p", data.p),
            ("r", data.r),
            ("u", args.u),
            ("objective", fit.objective),
            ("start_criterion", start_criterion),
            ("angle_start_to_final_deg", start_angle),
            ("sweeps", fit.sweeps),
            ("converged", int(fit.converged)),
        ]
        gamma = env.gamma_hat.entries
    for key, value in summary:
        print(f"{key}: {value}")
    if args.out_prefix:
        with open(args.out_prefix + "_summary.csv", "w", encoding="utf-8") as handle:
            handle.write("key,value\n")
            for key, value in summary:
                handle.write(f"{key},{value}\n")
        write_matrix_csv(args.out_prefix + "_beta.csv", beta)
        if gamma is not None:
            write_matrix_csv(args.out_prefix + "_gamma.csv", gamma)
        log.info("wrote %s_{summary,beta%s}.csv", args.out_prefix, ",gamma" if gamma is not None else "")
    return 0


def cmd_select(args) -> int:
    x = read_matrix_csv(args.x_csv, args.header)
    y = read_matrix_csv(args.y_csv, args.header)
    data = RegressionData(x, y)
    u_values = _parse_u_range(args.u_range, data.r)
    report = cv_select_u(
        data,
        u_values,
        folds=args.folds,
        reps=args.reps,
        seed=args.seed,
        opts=_solver_options(args),
        threads=_threads(args),
    )
    lines = ["u,mean_error,std_error,selected\n"]
    for u, mean, stderr in report.per_u:
        lines.append(f"{u},{mean!r},{stderr!r},{int(u == report.selected_u)}\n")
    text = "".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    print(f"selected_u: {report.selected_u}")
    return 0


def cmd_simulate(args) -> int:
    spec = make_scenario(args.scenario, seed=args.seed, u=args.u, r=args.r)
    rows = run_replications(spec, reps=args.reps, opts=_solver_options(args), threads=_threads(args))
    text = emit_table(rows, format=args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _add_solver_flags(parser):
    parser.add_argument("--max-sweeps", type=int, default=100, help="sweep limit for the descent")
    parser.add_argument("--rel-tol", type=float, default=1e-8, help="relative per-sweep decrease to stop at")
    parser.add_argument("--mode", choices=("row_cyclic", "direct_full"), default="row_cyclic")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: ENVFIT_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="envfit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"envfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a response envelope to X/Y CSV data")
    fit.add_argument("x_csv")
    fit.add_argument("y_csv")
    fit.add_argument("-u", type=int, default=None, help="envelope dimension")
    fit.add_argument("--ols", action="store_true", help="plain OLS coefficients instead of an envelope")
    fit.add_argument("--header", action="store_true", help="skip one header line in the CSVs")
    fit.add_argument("--out-prefix", default=None, help="write <prefix>_summary/beta/gamma CSV files")
    _add_solver_flags(fit)
    fit.set_defaults(func=cmd_fit)

    select = sub.add_parser("select", help="choose the envelope dimension by cross-validation")
    select.add_argument("x_csv")
    select.add_argument("y_csv")
    select.add_argument("--u-range", required=True, help="candidates: 'LO:HI', 'a,b,c', or a single value")
    select.add_argument("--folds", type=int, default=5)
    select.add_argument("--reps", type=int, default=50)
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--header", action="store_true", help="skip one header line in the CSVs")
    select.add_argument("--out", default=None, help="report CSV path (default: stdout)")
    _add_solver_flags(select)
    select.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="run a benchmark scenario and emit its table")
    sim.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIO_IDS)}")
    sim.add_argument("--reps", type=int, default=50)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("-u", type=int, default=None, help="envelope dimension (scenarios V-VII)")
    sim.add_argument("-r", type=int, default=None, help="response dimension (scenario VII)")
    sim.add_argument("--format", choices=("csv", "markdown"), default="csv")
    sim.add_argument("--out", default=None, help="table path (default: stdout)")
    _add_solver_flags(sim)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CsvParseError, InvalidInput) as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except EnvfitError as exc:
        log.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
