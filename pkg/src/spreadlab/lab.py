"""Monte Carlo harness: repeated simulated days, bias/dispersion tables, a
Gaussian relevance test, sensitivity sweeps and log-error metrics for
estimates against known spreads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm, spearmanr

from . import registry
from .registry import EstimatorParams
from .simkit import SimConfig, simulate_day
from .spreads import truncate

DEFAULT_SIGNIFICANCE = 0.05
FAILURE_TOLERANCE = 0.01


class DegenerateDistribution(ValueError):
    pass


def bootstrap_test(estimates, true_s: float, significance: float = DEFAULT_SIGNIFICANCE):
    """Two-sided Gaussian test of ``true_s`` against the estimate distribution.

    The estimates are summarized by their mean and population standard
    deviation; returns ``(p_value, decision)`` with decision ``"Rejected"``
    when ``p < significance``.
    """
    x = np.asarray(estimates, dtype=float)
    if x.size < 2:
        raise DegenerateDistribution("need at least two estimates")
    sd = x.std()
    if sd == 0:
        raise DegenerateDistribution("degenerate estimate distribution")
    p = float(2.0 * norm.sf(abs(true_s - x.mean()) / sd))
    return p, ("Rejected" if p < significance else "Accepted")


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    bias: float
    std: float
    quadratic_risk: float
    p_value: float
    decision: str
    n_trials: int
    n_failed: int
    mean: float

    @property
    def failure_flag(self) -> bool:
        return self.n_failed > FAILURE_TOLERANCE * (self.n_trials + self.n_failed)


@dataclass(frozen=True)
class ExperimentReport:
    rows: Mapping[str, EstimatorSummary]
    config: SimConfig
    n_trials: int
    estimates: Mapping[str, np.ndarray] = field(repr=False, default_factory=dict)
    errors: Mapping[str, list] = field(repr=False, default_factory=dict)

    def __getitem__(self, estimator_id: str) -> EstimatorSummary:
        return self.rows[estimator_id]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows.values()]).set_index("estimator")

    def to_text(self) -> str:
        df = self.to_frame()[["bias", "std", "quadratic_risk", "p_value", "decision", "n_failed"]]
        return df.to_string(float_format=lambda x: f"{x: .2e}")


def summarize(estimates, true_s: float, significance: float = DEFAULT_SIGNIFICANCE, name: str = "", n_failed: int = 0) -> EstimatorSummary:
    """Bias, population std, quadratic risk and test decision of truncated estimates."""
    x = np.asarray(estimates, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        nan = float("nan")
        return EstimatorSummary(name, nan, nan, nan, nan, "Undefined", 0, n_failed, nan)
    mean = float(x.mean())
    bias = mean - true_s
    sd = float(x.std())
    try:
        p, dec = bootstrap_test(x, true_s, significance)
    except DegenerateDistribution:
        # limit of the Gaussian test as the spread of estimates vanishes
        p = 1.0 if bias == 0 else 0.0
        dec = "Rejected" if p < significance else "Accepted"
    return EstimatorSummary(name, bias, sd, bias * bias + sd * sd, p, dec, int(x.size), n_failed, mean)


def _trial(config: SimConfig, trial: int, ids: Sequence[str], params: EstimatorParams):
    closes, bars = simulate_day(config, trial)
    out = np.full(len(ids), np.nan)
    errs = []
    for j, eid in enumerate(ids):
        try:
            out[j] = registry.run(eid, closes, bars, params).s_squared
        except registry.Unimplemented:
            raise
        except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
            errs.append((eid, trial, str(exc)))
    return out, errs


def _trial_block(args):
    config, trials, ids, params = args
    return [_trial(config, t, ids, params) for t in trials]


def simulate_estimates(
    config: SimConfig,
    estimators: Sequence[str],
    n_trials: int,
    params: EstimatorParams | None = None,
    jobs: int = 1,
    first_trial: int = 0,
):
    """Squared-spread estimates, shape ``(n_trials, len(estimators))``, in trial order.

    Each trial uses its own derived random streams, so the output does not
    depend on ``jobs``.
    """
    ids = registry.validate(estimators)
    params = params or EstimatorParams()
    trials = list(range(first_trial, first_trial + n_trials))
    if jobs <= 1:
        results = _trial_block((config, trials, ids, params))
    else:
        size = max(1, math.ceil(len(trials) / (4 * jobs)))
        blocks = [(config, trials[i : i + size], ids, params) for i in range(0, len(trials), size)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = [r for block in ex.map(_trial_block, blocks) for r in block]
    s2 = np.vstack([r[0] for r in results]) if results else np.empty((0, len(ids)))
    errors = [e for r in results for e in r[1]]
    return ids, s2, errors


def run_experiment(
    config: SimConfig,
    estimators: Sequence[str],
    n_trials: int,
    params: EstimatorParams | None = None,
    significance: float = DEFAULT_SIGNIFICANCE,
    jobs: int = 1,
) -> ExperimentReport:
    """Simulate ``n_trials`` days and tabulate every estimator against the true spread."""
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    ids, s2, errors = simulate_estimates(config, estimators, n_trials, params, jobs)
    s = truncate(s2)
    s[~np.isfinite(s2)] = np.nan
    rows, est, errs = {}, {}, {}
    true_s = config.model.s
    for j, eid in enumerate(ids):
        failed = int(np.sum(~np.isfinite(s2[:, j])))
        rows[eid] = summarize(s[:, j], true_s, significance, eid, failed)
        est[eid] = s2[:, j]
        errs[eid] = [e for e in errors if e[0] == eid]
    return ExperimentReport(rows, config, n_trials, est, errs)


def _sweep(config, estimators, grid, n_trials, key, params, significance, jobs):
    frames = []
    for g in grid:
        if key == "s":
            cfg = config.with_(model=config.model.with_(s=float(g)))
        else:
            cfg = config.with_(liquidity_prob=float(g))
        df = run_experiment(cfg, estimators, n_trials, params, significance, jobs).to_frame()
        df.insert(0, key, float(g))
        frames.append(df.reset_index())
    return pd.concat(frames, ignore_index=True)


def sweep_spread(config, estimators, s_grid, n_trials, params=None, significance=DEFAULT_SIGNIFICANCE, jobs=1) -> pd.DataFrame:
    """One experiment per spread value; every grid point reuses the same seed."""
    if len(s_grid) == 0:
        raise ValueError("empty spread grid")
    return _sweep(config, estimators, s_grid, n_trials, "s", params, significance, jobs)


def sweep_liquidity(config, estimators, pi_grid, n_trials, params=None, significance=DEFAULT_SIGNIFICANCE, jobs=1) -> pd.DataFrame:
    """One experiment per trading probability; same seed across the grid."""
    if len(pi_grid) == 0:
        raise ValueError("empty liquidity grid")
    return _sweep(config, estimators, pi_grid, n_trials, "liquidity_prob", params, significance, jobs)


# ---------------------------------------------------------------------------
# estimates against known spreads


@dataclass(frozen=True)
class EvalMetrics:
    rmse: float
    mape: float
    spearman_rmse: float
    spearman_mape: float
    per_asset: pd.DataFrame = field(repr=False)
    n_excluded: int = 0


def evaluate(
    estimates: pd.DataFrame,
    truths: pd.DataFrame,
    attribute: Mapping[str, float] | pd.Series | None = None,
) -> dict[str, EvalMetrics]:
    """Log-scale RMSE and MAPE per asset, averaged over assets, per estimator.

    ``estimates`` has columns ``date, asset, value`` and optionally
    ``estimator``; ``truths`` has ``date, asset, value``.  Rows with a
    non-positive estimate or truth are dropped and counted.  With an
    ``attribute`` per asset (e.g. capitalization), the Spearman correlation
    between its ranking and each estimator's error rank among all
    estimators is reported.
    """
    est = estimates.copy()
    if "estimator" not in est.columns:
        est["estimator"] = "estimate"
    merged = est.merge(truths[["date", "asset", "value"]], on=["date", "asset"], suffixes=("", "_true"), how="inner")
    ok = (merged["value"] > 0) & (merged["value_true"] > 0)
    excluded = merged.loc[~ok].groupby("estimator").size()
    merged = merged.loc[ok].copy()
    lt = np.log(merged["value_true"])
    err = np.log(merged["value"]) - lt
    merged["sq"] = err**2
    with np.errstate(divide="ignore"):
        merged["ape"] = np.abs(err / lt)
    per = merged.groupby(["estimator", "asset"]).agg(rmse=("sq", "mean"), mape=("ape", "mean"))
    per["rmse"] = np.sqrt(per["rmse"])
    per = per.reset_index()
    per["rank_rmse"] = per.groupby("asset")["rmse"].rank(method="average")
    per["rank_mape"] = per.groupby("asset")["mape"].rank(method="average")

    attr = pd.Series(attribute, dtype=float) if attribute is not None else None
    out = {}
    for eid, g in per.groupby("estimator", sort=False):
        sp_r = sp_m = float("nan")
        if attr is not None:
            a = attr.reindex(g["asset"]).to_numpy()
            good = np.isfinite(a)
            if good.sum() >= 2:
                # constant ranks give NaN, which is the intended answer
                with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    sp_r = float(spearmanr(a[good], g["rank_rmse"].to_numpy()[good]).statistic)
                    sp_m = float(spearmanr(a[good], g["rank_mape"].to_numpy()[good]).statistic)
        out[eid] = EvalMetrics(
            float(g["rmse"].mean()),
            float(g["mape"].mean()),
            sp_r,
            sp_m,
            g.set_index("asset").drop(columns="estimator"),
            int(excluded.get(eid, 0)),
        )
    return out
