"""Command-line front end.

Subcommands: ``simulate``, ``estimate``, ``experiment``, ``asymptotics``,
``evaluate`` and ``replay``.  Every run writes a JSON manifest holding the
argument vector, the seed and the library version; ``replay`` re-executes a
manifest.

Exit codes: 0 success, 1 usage error, 2 partial estimator failure, 3 I/O or
malformed input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, benchmarks, lab, registry, theory
from .registry import EstimatorParams
from .series import DEFAULT_ANNUALIZATION, LogPriceSeries, OhlcSeries, SeriesError, load_csv, write_csv
from .simkit import SimConfig, annual_sigma_from_daily, simulate
from .spreads import FitOptions
from .theory import ModelKind, ModelSpec

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# shared flag groups


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", type=int, choices=(1, 2, 3, 4), default=1,
                   help="1 iid noise, 2 fBm mid price, 3 OU trade signs, 4 both (default 1)")
    g.add_argument("--spread", type=float, default=0.005, help="relative spread S (default 0.005)")
    g.add_argument("--sigma", type=float, default=None,
                   help="annualized volatility; overrides --daily-vol")
    g.add_argument("--daily-vol", type=float, default=0.03,
                   help="volatility over a 480-minute day, converted with --hurst (default 0.03)")
    g.add_argument("--hurst", type=float, default=0.5, help="Hurst exponent for models 2 and 4 (default 0.5)")
    g.add_argument("--theta", type=float, default=0.01,
                   help="OU mean-reversion rate per second for models 3 and 4 (default 0.01)")
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="sign-correlation time scale in years (theory only; default from --theta)")
    g.add_argument("--tau-seconds", type=float, default=60.0, help="bar duration in seconds (default 60)")


def _add_sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--bar-factor", type=int, default=60, help="fine steps per bar (default 60)")
    g.add_argument("--n-fine", type=int, default=28_800, help="fine steps per day (default 28800)")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--liquidity-prob", type=float, default=1.0,
                   help="probability that a fine step carries a trade (default 1)")
    g.add_argument("--noise", choices=("iid", "ou", "chain"), default=None,
                   help="trade-sign process (default: ou for models 3-4, else iid)")
    g.add_argument("--chain-rho", type=float, default=None, help="per-step correlation of the sign chain")


def _add_lag_flags(p, lag_set=False):
    g = p.add_argument_group("estimator lags")
    if lag_set:
        g.add_argument("--lag-set", choices=("default", "study"), default="default",
                       help="base lags: default (1, 2, 1, 1) or the simulation-study set (1, 5, 1, 4)")
    g.add_argument("--l", type=int, default=None, help="first lag L (default 1)")
    g.add_argument("--lprime", type=int, default=None, help="second lag L' (default 2)")
    g.add_argument("--lhurst", type=int, default=None, help="base lag of the Hurst estimate (default 1)")
    g.add_argument("--lrho", type=int, default=None, help="base lag of the plug-in OU estimator (default 1)")
    g.add_argument("--lmax", type=int, default=None, help="largest lag for the median stack and the full fit")
    g.add_argument("--scheme", type=int, choices=(1, 2, 3), default=1,
                   help="increments: 1 overlapping, 2 non-overlapping, 3 strictly disjoint (default 1)")
    g.add_argument("--known-hurst", type=float, default=None, help="use this H instead of estimating it")
    g.add_argument("--known-rho", type=float, default=None, help="use this sign correlation instead of estimating it")
    f = p.add_argument_group("full fit")
    f.add_argument("--fit-grid", type=_ints, default=None, metavar="NH,NL", help="grid sizes for H and lambda (default 50,50)")
    f.add_argument("--fit-hurst-bounds", type=_floats, default=None, metavar="LO,HI")
    f.add_argument("--fit-lambda-bounds", type=_floats, default=None, metavar="LO,HI",
                   help="lambda bounds in bar units")
    f.add_argument("--fit-no-polish", action="store_true", help="keep the grid optimum without refinement")


def _add_output_flags(p, required=False):
    p.add_argument("--output", type=Path, required=required, default=None, help="output file")
    p.add_argument("--manifest", type=Path, default=None,
                   help="manifest path (default <output>.manifest.json or ./spreadlab-<command>.manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spreadlab", description="Bid-ask spread estimation from close prices.")
    p.add_argument("--version", action="version", version=f"spreadlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one trading day and write bars or fine prices")
    _add_model_flags(s)
    _add_sim_flags(s)
    s.add_argument("--trial", type=int, default=0, help="trial index within the seed (default 0)")
    s.add_argument("--fine", action="store_true", help="write the fine-grid prices instead of bars")
    s.add_argument("--price-scale", choices=("raw", "log"), default="raw")
    _add_output_flags(s, required=True)

    e = sub.add_parser("estimate", help="estimate the spread of a price file")
    e.add_argument("--input", type=Path, required=True, help="CSV with close or open/high/low/close columns")
    e.add_argument("--price-scale", choices=("raw", "log"), default="raw")
    e.add_argument("--estimators", default="s11", help="comma-separated ids (default s11)")
    _add_lag_flags(e)
    e.add_argument("--format", choices=("csv", "json"), default=None, help="default from --output suffix, else csv")
    _add_output_flags(e)

    x = sub.add_parser("experiment", help="Monte Carlo table of estimator bias and dispersion")
    _add_model_flags(x)
    _add_sim_flags(x)
    x.add_argument("--trials", type=int, default=1000, help="number of simulated days (default 1000)")
    x.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    x.add_argument("--estimators", default="cs,ar,roll,agk1,s11,s21,s31,s41")
    x.add_argument("--significance", type=float, default=lab.DEFAULT_SIGNIFICANCE)
    x.add_argument("--sweep-spread", type=_floats, default=None, metavar="S1,S2,...")
    x.add_argument("--sweep-liquidity", type=_floats, default=None, metavar="P1,P2,...")
    _add_lag_flags(x, lag_set=True)
    _add_output_flags(x)

    a = sub.add_parser("asymptotics", help="closed-form variances and asymptotic dispersion curves")
    _add_model_flags(a)
    a.add_argument("--lmax", type=int, default=8, help="largest lag for the variance tables (default 8)")
    a.add_argument("--scheme", type=int, choices=(1, 2, 3), default=2)
    a.add_argument("--n", type=_ints, default=[510], help="sample sizes (default 510)")
    a.add_argument("--gamma", action="store_true",
                   help="add sqrt(Gamma/n) of the strictly disjoint two-lag estimator on an S grid")
    a.add_argument("--l", type=int, default=1)
    a.add_argument("--m", type=int, default=2, help="second lag is m(L+1)-1 (default 2)")
    a.add_argument("--s-grid", type=_floats, default=None, help="spreads for --gamma (default 0 to 0.02)")
    _add_output_flags(a)

    v = sub.add_parser("evaluate", help="log-scale RMSE/MAPE of estimates against known spreads")
    v.add_argument("--input", type=Path, required=True, help="estimates: date, asset, value[, estimator]")
    v.add_argument("--truth", type=Path, required=True, help="truths: date, asset, value")
    v.add_argument("--attribute", type=Path, default=None, help="per-asset attribute: asset, value")
    _add_output_flags(v)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest_file", type=Path)
    return p


# ---------------------------------------------------------------------------
# flag interpretation


def model_from_args(args) -> ModelSpec:
    kind = ModelKind.from_index(args.model)
    tau = args.tau_seconds / DEFAULT_ANNUALIZATION
    hurst = args.hurst if kind in (ModelKind.FBM_PRICE, ModelKind.FULL) else 0.5
    if not 0 < hurst < 1:
        raise UsageError("--hurst must lie in (0, 1)")
    sigma = args.sigma if args.sigma is not None else annual_sigma_from_daily(args.daily_vol, hurst)
    theta = lam = None
    if kind in (ModelKind.OU_TRADES, ModelKind.FULL):
        theta = args.theta
        if not theta > 0:
            raise UsageError("--theta must be positive")
        lam = args.lam if args.lam is not None else 1.0 / (theta * DEFAULT_ANNUALIZATION)
    return ModelSpec(kind, s=args.spread, sigma=sigma, hurst=hurst, lambda_years=lam,
                     theta_per_second=theta, tau_years=tau)


def config_from_args(args) -> SimConfig:
    try:
        return SimConfig(model_from_args(args), n_fine=args.n_fine, bar_factor=args.bar_factor, seed=args.seed,
                         liquidity_prob=args.liquidity_prob, noise_kind=args.noise, rho=args.chain_rho)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def params_from_args(args) -> EstimatorParams:
    base = registry.SIMULATION_STUDY if getattr(args, "lag_set", "default") == "study" else EstimatorParams()
    fit = None
    if args.fit_grid or args.fit_hurst_bounds or args.fit_lambda_bounds or args.fit_no_polish:
        kw = {}
        if args.fit_grid:
            if len(args.fit_grid) != 2:
                raise UsageError("--fit-grid takes two integers")
            kw["n_hurst"], kw["n_lambda"] = args.fit_grid
        for name, key in (("fit_hurst_bounds", "hurst_bounds"), ("fit_lambda_bounds", "lambda_bounds")):
            val = getattr(args, name)
            if val:
                if len(val) != 2 or not val[0] < val[1]:
                    raise UsageError(f"--{name.replace('_', '-')} takes LO,HI with LO < HI")
                kw[key] = tuple(val)
        kw["polish"] = not args.fit_no_polish
        fit = FitOptions(**kw)
    over = {
        "L": args.l, "L_prime": args.lprime, "L_hurst": args.lhurst, "L_rho": args.lrho,
        "L_max_median": args.lmax, "L_max_fit": args.lmax,
    }
    kw = {k: v for k, v in over.items() if v is not None}
    for k, v in kw.items():
        if v < 1:
            raise UsageError(f"lag {k} must be a positive integer")
    if kw.get("L", base.L) == kw.get("L_prime", base.L_prime):
        raise UsageError("--l and --lprime must differ")
    return replace(base, **kw, v=args.scheme, fit_options=fit, hurst=args.known_hurst, rho=args.known_rho)


def _estimator_ids(text: str) -> list[str]:
    try:
        return registry.validate(text.split(","))
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> tuple[int, list[str]]:
    cfg = config_from_args(args)
    path = simulate(cfg, args.trial)
    if args.fine:
        series = LogPriceSeries(path.fine_log_prices, path.step_seconds)
    else:
        series = path.bars(cfg.bar_factor)
    write_csv(args.output, series, price_scale=args.price_scale)
    truth = args.output.with_name(args.output.name + ".truth.json")
    m = cfg.model
    truth.write_text(json.dumps({
        "spread": m.s, "model": m.kind.index, "kind": m.kind.value, "sigma_annual": m.sigma,
        "hurst": m.hurst, "theta_per_second": m.theta_per_second, "lambda_years": m.lambda_years,
        "tau_years": m.tau_years, "bar_factor": cfg.bar_factor, "n_fine": cfg.n_fine,
        "noise": cfg.noise_kind.value, "liquidity_prob": cfg.liquidity_prob,
        "seed": cfg.seed, "trial": args.trial,
    }, indent=2))
    return EXIT_OK, [str(args.output), str(truth)]


def _diag_text(d) -> str:
    return json.dumps({k: float(v) for k, v in d.items()}, sort_keys=True)


def cmd_estimate(args) -> tuple[int, list[str]]:
    ids = _estimator_ids(args.estimators)
    params = params_from_args(args)
    data = load_csv(args.input, price_scale=args.price_scale)
    if isinstance(data, OhlcSeries):
        closes, bars = data.closes(), data
    else:
        closes, bars = data, None
    rows, status = [], EXIT_OK
    for eid in ids:
        try:
            est = registry.run(eid, closes, bars, params)
            rows.append({"estimator": eid, "s_squared": est.s_squared, "s": est.s,
                         "diagnostics": _diag_text(est.diagnostics), "error": ""})
        except (registry.Unimplemented, ValueError, ArithmeticError) as exc:
            status = EXIT_PARTIAL
            msg = str(exc)
            print(f"{eid}: {msg}", file=sys.stderr)
            rows.append({"estimator": eid, "s_squared": math.nan, "s": math.nan, "diagnostics": "{}", "error": msg})
    df = pd.DataFrame(rows)
    fmt = args.format or ("json" if args.output and args.output.suffix == ".json" else "csv")
    text = df.to_json(orient="records", indent=2) if fmt == "json" else df.to_csv(index=False, float_format="%.17g")
    outputs = []
    if args.output:
        args.output.write_text(text)
        outputs.append(str(args.output))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return status, outputs


def cmd_experiment(args) -> tuple[int, list[str]]:
    if args.trials < 2:
        raise UsageError("--trials must be >= 2")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    ids = _estimator_ids(args.estimators)
    if "agk2" in ids:
        raise UsageError(benchmarks.RESERVED["agk2"])
    cfg = config_from_args(args)
    params = params_from_args(args)
    if args.sweep_spread and args.sweep_liquidity:
        raise UsageError("choose one of --sweep-spread and --sweep-liquidity")
    if args.sweep_spread:
        df = lab.sweep_spread(cfg, ids, args.sweep_spread, args.trials, params, args.significance, args.jobs)
        text = df.to_string(index=False, float_format=lambda v: f"{v: .2e}")
    elif args.sweep_liquidity:
        df = lab.sweep_liquidity(cfg, ids, args.sweep_liquidity, args.trials, params, args.significance, args.jobs)
        text = df.to_string(index=False, float_format=lambda v: f"{v: .2e}")
    else:
        report = lab.run_experiment(cfg, ids, args.trials, params, args.significance, args.jobs)
        df = report.to_frame().reset_index()
        text = report.to_text()
    print(text)
    outputs = []
    if args.output:
        df.to_csv(args.output, index=False, float_format="%.10g")
        txt = args.output.with_suffix(".txt")
        txt.write_text(text + "\n")
        outputs += [str(args.output), str(txt)]
    failed = df["n_failed"].sum() if "n_failed" in df else 0
    return (EXIT_PARTIAL if failed else EXIT_OK), outputs


def cmd_asymptotics(args) -> tuple[int, list[str]]:
    model = model_from_args(args)
    if args.lmax < 1:
        raise UsageError("--lmax must be >= 1")
    rows = []
    for L in range(1, args.lmax + 1):
        rows.append(("theoretical_variance", L, "", "", "", float(theory.theoretical_variance(model, L)), "closed_form"))
    if model.kind is not ModelKind.FULL:
        for L in range(1, args.lmax + 1):
            try:
                val = theory.var_of_variance(model, L, args.scheme)
            except (ValueError, ArithmeticError) as exc:
                print(f"var_of_variance L={L}: {exc}", file=sys.stderr)
                continue
            rows.append((f"var_of_variance_v{args.scheme}", L, "", "", "", val, "closed_form"))
            for n in args.n:
                try:
                    vv = theory.variance_of_estimate(model, n, L, args.scheme)
                except (ValueError, ArithmeticError):
                    continue
                rows.append((f"variance_of_estimate_v{args.scheme}", L, "", "", n, vv, "closed_form"))
    if args.gamma:
        if args.m < 2:
            raise UsageError("--m must be >= 2")
        s_grid = args.s_grid if args.s_grid else list(np.linspace(0.0, 0.02, 41))
        Lp = args.m * (args.l + 1) - 1
        curves = theory.fig1_curve(s_grid, args.n, args.l, args.m, model.sigma, model.tau_years)
        for j, s in enumerate(s_grid):
            g = theory.gamma_standard_special(args.l, args.m, model.with_(kind=ModelKind.IID, s=s, hurst=0.5,
                                                                          lambda_years=None, theta_per_second=None))
            rows.append(("gamma", args.l, Lp, s, "", g.value, g.correlation_source))
            for i, n in enumerate(args.n):
                rows.append(("asymptotic_std", args.l, Lp, s, n, float(curves[i, j]), g.correlation_source))
    df = pd.DataFrame(rows, columns=["quantity", "L", "L_prime", "s", "n", "value", "correlation_source"])
    outputs = []
    if args.output:
        df.to_csv(args.output, index=False, float_format="%.17g")
        outputs.append(str(args.output))
    else:
        sys.stdout.write(df.to_csv(index=False, float_format="%.17g"))
    return EXIT_OK, outputs


def cmd_evaluate(args) -> tuple[int, list[str]]:
    est = pd.read_csv(args.input)
    truth = pd.read_csv(args.truth)
    for name, df in (("--input", est), ("--truth", truth)):
        missing = {"date", "asset", "value"} - set(df.columns)
        if missing:
            raise SeriesError(f"{name} is missing column(s) {', '.join(sorted(missing))}")
    attr = None
    if args.attribute:
        a = pd.read_csv(args.attribute)
        if not {"asset", "value"} <= set(a.columns):
            raise SeriesError("--attribute needs columns asset, value")
        attr = a.set_index("asset")["value"]
    res = lab.evaluate(est, truth, attr)
    df = pd.DataFrame([
        {"estimator": k, "rmse": m.rmse, "mape": m.mape, "spearman_rmse": m.spearman_rmse,
         "spearman_mape": m.spearman_mape, "n_excluded": m.n_excluded}
        for k, m in res.items()
    ])
    print(df.to_string(index=False, float_format=lambda v: f"{v: .4g}"))
    outputs = []
    if args.output:
        df.to_csv(args.output, index=False, float_format="%.17g")
        outputs.append(str(args.output))
    return EXIT_OK, outputs


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "asymptotics": cmd_asymptotics,
    "evaluate": cmd_evaluate,
}


def _manifest_path(args) -> Path:
    if args.manifest:
        return args.manifest
    if getattr(args, "output", None):
        return args.output.with_name(args.output.name + ".manifest.json")
    return Path(f"spreadlab-{args.command}.manifest.json")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    return v


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            recorded = json.loads(args.manifest_file.read_text())["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"spreadlab: cannot read manifest: {exc}", file=sys.stderr)
            return EXIT_IO
        return main(recorded)

    started = datetime.now(timezone.utc).isoformat()
    error = None
    try:
        code, outputs = COMMANDS[args.command](args)
    except UsageError as exc:
        code, outputs, error = EXIT_USAGE, [], str(exc)
    except (OSError, SeriesError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        code, outputs, error = EXIT_IO, [], str(exc)
    if error is not None:
        print(f"spreadlab {args.command}: {error}", file=sys.stderr)
    manifest = {
        "command": args.command,
        "argv": argv,
        "flags": {k: _jsonable(v) for k, v in vars(args).items()},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "exit_code": code,
        "outputs": outputs,
        "error": error,
    }
    try:
        _manifest_path(args).write_text(json.dumps(manifest, indent=2))
    except OSError as exc:
        print(f"spreadlab: cannot write manifest: {exc}", file=sys.stderr)
        return code or EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
