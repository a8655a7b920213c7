# main.py

# faan command line: fit, bounds, rank, doa-sim, backtest, synth.
# Reports go to --out or stdout; diagnostics and logs go to stderr.

import argparse
import logging
import math
import sys
from pathlib import Path

import pandas as pd

from faan_cov import settings
from faan_cov.apps.doa import rmse_sweep, simulate_array
from faan_cov.apps.portfolio import (
    BacktestSpec,
    Estimator,
    SingularPolicy,
    lookback_sweep,
    run_backtest,
    synth_factor_returns,
)
from faan_cov.apps.scenario import load_scenario
from faan_cov.core.bounds import (
    frisch_test_matrix,
    guttman_bound,
    identifiability_class,
    ledermann_bound,
    param_counts,
    resolvable_sources,
)
from faan_cov.core.covmodel import SigmaInit, SolverConfig
from faan_cov.core.matrixio import (
    read_returns_csv,
    read_scm_csv,
    write_json_report,
    write_matrix_csv,
    write_table_csv,
)
from faan_cov.core.ranksel import select_rank
from faan_cov.errors import FaanError, InvalidInputError, SingularMatrixError
from faan_cov.solvers import FitRequest, Method, fit

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(settings.EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _solver_config(args) -> SolverConfig:
    if args.sigma_init == SigmaInit.RANDOM and args.seed is None:
        raise UsageError("--sigma-init random needs --seed")
    return SolverConfig(
        epsilon=args.epsilon,
        max_iter=args.max_iter,
        inner_sigma_sweeps=args.inner_sweeps,
        sigma_init=args.sigma_init,
        sigma0=args.sigma0,
        seed=args.seed if args.seed is not None else settings.SEED,
        diag_tol=args.diag_tol,
    )


def cmd_fit(args) -> int:
    scm = read_scm_csv(_existing(args.matrix))
    result = fit(FitRequest(scm, args.rank, _solver_config(args), Method(args.method)))
    _emit(write_json_report(None, result.to_report()), args.out)
    if not result.converged:
        return settings.EXIT_NOT_CONVERGED
    if not result.feasible:
        return settings.EXIT_INFEASIBLE
    return settings.EXIT_OK


def cmd_bounds(args) -> int:
    if args.matrix is None and args.n is None:
        raise UsageError("bounds needs a matrix file or --n")
    r_g = "unavailable"
    if args.matrix is not None:
        scm = read_scm_csv(_existing(args.matrix))
        n = scm.n
        try:
            r_g = str(guttman_bound(scm).r_g)
        except SingularMatrixError as exc:
            logger.warning("r_G unavailable: %s", exc)
    else:
        n = args.n
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")

    r_l = ledermann_bound(n)
    lines = [
        "quantity,value",
        f"n,{n}",
        f"r_L,{r_l!r}",
        f"ceil_r_L,{math.ceil(r_l - 1e-12)}",
        f"r_G,{r_g}",
        f"resolvable_sources_isotropic,{resolvable_sources(n, anisotropic=False)}",
        f"resolvable_sources_anisotropic,{resolvable_sources(n, anisotropic=True)}",
    ]
    if args.rank is not None:
        verdict = identifiability_class(n, args.rank)
        lines += [
            f"rank,{args.rank}",
            f"n_m,{verdict.n_m}",
            f"n_c,{verdict.n_c}",
            f"identifiability,{verdict.category}",
        ]
    lines += ["", "r,n_m,n_c,identifiability"]
    for r in range(1, n):
        counts = param_counts(n, r)
        lines.append(f"{r},{counts.n_m},{counts.n_c},{identifiability_class(n, r).category}")
    _emit("\n".join(lines) + "\n", args.out)
    return settings.EXIT_OK


def cmd_rank(args) -> int:
    scm = read_scm_csv(_existing(args.matrix))
    scan = select_rank(scm, args.N, args.rmax, _solver_config(args), args.workers)
    _emit(write_json_report(None, scan.to_report()), args.out)
    return settings.EXIT_OK


def cmd_doa_sim(args) -> int:
    config_path = _existing(args.config) if args.config is not None else None
    scn = load_scenario(config_path, args.name, seed=args.seed)
    table = rmse_sweep(
        scn,
        args.sweep,
        args.values,
        args.trials,
        SolverConfig(epsilon=args.epsilon),
        args.workers,
    )
    _emit(write_table_csv(None, table), args.out)
    return settings.EXIT_OK


def cmd_backtest(args) -> int:
    returns = read_returns_csv(_existing(args.returns))
    base = BacktestSpec(
        lookback_n=args.lookback[0],
        rebalance_days=args.rebalance,
        horizon_days=args.horizon,
        estimator=Estimator.FAAN_BIC if args.estimator == "all" else args.estimator,
        r_max=args.rmax,
        singular_policy=args.singular_policy,
        sample_std=args.sample_std,
    )
    if len(args.lookback) == 1 and args.estimator != "all":
        result = run_backtest(returns, base, args.workers)
        _emit(write_json_report(None, result.to_report()), args.out)
        return settings.EXIT_OK
    estimators = tuple(Estimator) if args.estimator == "all" else (base.estimator,)
    table = lookback_sweep(returns, args.lookback, estimators, base, args.workers)
    _emit(write_table_csv(None, table), args.out)
    return settings.EXIT_OK


def cmd_synth(args) -> int:
    match args.kind:
        case "frisch":
            text = write_matrix_csv(None, frisch_test_matrix(args.n, args.seed).entries)
        case "returns":
            rank = 3 if args.rank is None else args.rank
            data = synth_factor_returns(args.n, rank, args.snr_db, args.T, args.seed)
            frame = pd.DataFrame(data, columns=[f"asset{k}" for k in range(args.n)])
            text = write_table_csv(None, frame)
        case _:
            scn = load_scenario(
                None, n=args.n, n_snapshots=args.T, snr_db=args.snr_db, seed=args.seed
            )
            text = write_matrix_csv(None, simulate_array(scn))
    _emit(text, args.out)
    return settings.EXIT_OK


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--epsilon", type=float, default=settings.EPSILON)
    p.add_argument("--max-iter", type=int, default=settings.MAX_ITER)
    p.add_argument("--inner-sweeps", type=int, default=settings.INNER_SIGMA_SWEEPS)
    p.add_argument(
        "--sigma-init", choices=[str(s) for s in SigmaInit], default=settings.SIGMA_INIT
    )
    p.add_argument("--sigma0", type=_floats, default=None, help="explicit initial variances")
    p.add_argument("--diag-tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="seed for --sigma-init random")


def build_parser() -> CliParser:
    parser = CliParser(prog="faan", description="Low-rank plus diagonal covariance estimation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("fit", help="fit SS^T + Sigma to a matrix file")
    p.add_argument("matrix")
    p.add_argument("--method", choices=[str(m) for m in Method], default="faan")
    p.add_argument("--rank", type=int, required=True)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bounds", help="rank bounds and identifiability")
    p.add_argument("matrix", nargs="?")
    p.add_argument("--n", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rank", help="BIC rank scan")
    p.add_argument("matrix")
    p.add_argument("--N", type=int, required=True, help="number of samples behind the matrix")
    p.add_argument("--rmax", type=int, default=None)
    _add_solver_flags(p)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("doa-sim", help="Monte-Carlo MUSIC RMSE sweep")
    p.add_argument("--config", help="scenario JSON (default: bundled scenario)")
    p.add_argument("--name", default="scenario")
    p.add_argument("--sweep", choices=["N", "snr"], default="N")
    p.add_argument("--values", type=_floats, default=None)
    p.add_argument("--trials", type=int, default=settings.DOA_TRIALS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=settings.DOA_EPSILON)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_doa_sim)

    p = sub.add_parser("backtest", help="rolling minimum-variance backtest")
    p.add_argument("returns")
    p.add_argument("--lookback", type=int, nargs="+", required=True)
    p.add_argument(
        "--estimator", choices=[str(e) for e in Estimator] + ["all"], default="faan_bic"
    )
    p.add_argument("--rebalance", type=int, default=settings.REBALANCE_DAYS)
    p.add_argument("--horizon", type=int, default=settings.HORIZON_DAYS)
    p.add_argument("--rmax", type=int, default=settings.R_MAX)
    p.add_argument(
        "--singular-policy", choices=[str(s) for s in SingularPolicy], default="pinv"
    )
    p.add_argument("--sample-std", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("synth", help="generate test data")
    p.add_argument("--kind", choices=["doa", "returns", "frisch"], required=True)
    p.add_argument("--n", type=int, default=settings.DOA_SENSORS)
    p.add_argument("--rank", type=int, default=None, help="factor count for --kind returns")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--T", type=int, default=settings.DOA_SNAPSHOTS, help="rows (days or snapshots)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidInputError, FileNotFoundError) as exc:
        print(f"faan: error: {exc}", file=sys.stderr)
        return settings.EXIT_USAGE
    except FaanError as exc:
        print(f"faan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return settings.EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
