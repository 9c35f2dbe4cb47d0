"""Reference spread estimators: Roll, Corwin-Schultz, Abdi-Ranaldo and the
Ardia-Guidotti-Kroencke covariance estimator with its infrequent-trading
correction.

All functions return a :class:`SpreadEstimate` holding a squared spread.
For Corwin-Schultz, which estimates the spread itself, the squared value is
``CS * |CS|`` so that the sign survives and truncation gives ``max(0, CS)``.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .series import LogPriceSeries, OhlcSeries
from .spreads import SpreadEstimate

CS_TOL = 1e-12
CS_MAX_ITER = 200

RESERVED = {"agk2": "unimplemented: agk2 (EDGE)"}


class TooShort(ValueError):
    pass


class NoTradableWindows(ValueError):
    pass


def _closes(series) -> np.ndarray:
    if isinstance(series, LogPriceSeries):
        return series.values
    if isinstance(series, OhlcSeries):
        return series.close
    return np.asarray(series, dtype=float)


def _need_bars(bars: OhlcSeries, k: int = 2):
    if len(bars) < k:
        raise TooShort(f"need at least {k} consecutive bars, got {len(bars)}")


def roll(series: LogPriceSeries | OhlcSeries | np.ndarray) -> SpreadEstimate:
    """Minus four times the uncentered autocovariance of successive increments."""
    p = _closes(series)
    if p.size < 3:
        raise TooShort("Roll needs at least three prices")
    d = np.diff(p)
    return SpreadEstimate(float(-4.0 * np.dot(d[:-1], d[1:]) / (p.size - 2)), "roll")


def cs_intermediates(bars: OhlcSeries, tol: float = CS_TOL, max_iter: int = CS_MAX_ITER):
    """Per two-bar window ``beta, gamma, epsilon, alpha`` and the fallback mask.

    ``epsilon`` solves the window equation by bisection on
    ``[0, min(sqrt(gamma) + 1, eps_max)]``, where ``eps_max`` keeps the inner
    square root real.  Windows without a sign change fall back to 0.
    """
    _need_bars(bars)
    rng = bars.high - bars.low
    beta = rng[:-1] ** 2 + rng[1:] ** 2
    gamma = (np.maximum(bars.high[:-1], bars.high[1:]) - np.minimum(bars.low[:-1], bars.low[1:])) ** 2
    eps, fallback = _kernels.cs_solve(beta, gamma, tol, max_iter)
    inner = np.maximum(eps**2 * (_kernels.KAPPA2**2 - _kernels.KAPPA1) + 0.5 * beta, 0.0)
    alpha = -_kernels.KAPPA2 * eps + np.sqrt(inner)
    return beta, gamma, eps, alpha, fallback


def corwin_schultz(bars: OhlcSeries) -> SpreadEstimate:
    """Average of the per-window range-based spread estimates."""
    _, _, _, alpha, fallback = cs_intermediates(bars)
    # 2 (e^a - 1) / (1 + e^a) == 2 tanh(a / 2)
    cs = float(np.mean(2.0 * np.tanh(0.5 * alpha)))
    return SpreadEstimate(cs * abs(cs), "cs", {"fallback_windows": float(fallback.sum())})


def abdi_ranaldo(bars: OhlcSeries) -> SpreadEstimate:
    """Covariance of close-to-mid-range moves across consecutive bars."""
    _need_bars(bars)
    m = bars.mid_range
    c = bars.close
    prod = (c[:-1] - m[:-1]) * (m[1:] - c[:-1])
    return SpreadEstimate(float(-4.0 * prod.mean()), "ar")


def agk1(bars: OhlcSeries) -> SpreadEstimate:
    """Open-based covariance estimator with an infrequent-trading correction.

    For each bar ``t >= 1`` the mid-range-minus-open move is centered by its
    mean over bars whose open differs from both high and low and whose range
    is not collapsed onto the previous close; those same bars form the
    denominator count.  The squared spread is ``-4`` times the sum of the
    centered move times the open-minus-previous-close jump, over that count.
    """
    _need_bars(bars)
    o, h, l = bars.open[1:], bars.high[1:], bars.low[1:]
    prev_c = bars.close[:-1]
    x = bars.mid_range[1:] - o
    active = (o != h) & (o != l) & ~((prev_c == h) & (h == l))
    count = int(active.sum())
    if count == 0:
        raise NoTradableWindows("no tradable windows")
    x = x - x[active].mean()
    s2 = -4.0 * float(np.dot(x, o - prev_c)) / count
    return SpreadEstimate(s2, "agk1", {"tradable_windows": float(count)})
