"""Moment-based spread estimators.

Every estimator combines empirical variances of lagged increments (see
:mod:`spreadlab.varest`).  Inputs may be a :class:`LogPriceSeries`, a bare
array of log prices, or a mapping ``{lag: variance}``; the last form lets the
formulas be checked against exact theoretical variance curves.

All estimators return the squared spread, which can be negative; the spread
itself is ``max(0, s_squared) ** 0.5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.ndimage import minimum_filter1d
from scipy.optimize import least_squares, minimize_scalar

from .series import LogPriceSeries
from .varest import InfeasibleLag, PriceInput, VarianceScheme, VarianceSource

DEFAULT_MEDIAN_LMAX = 5
DEFAULT_FIT_LMAX = 10


class DegenerateInput(ValueError):
    """A ratio of variance differences has a zero denominator."""


@dataclass(frozen=True)
class SpreadEstimate:
    s_squared: float
    estimator_id: str
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    @property
    def s(self) -> float:
        return truncate(self.s_squared)


def truncate(s_squared):
    """Spread from a squared-spread estimate: ``max(0, x) ** 0.5``."""
    if np.ndim(s_squared) == 0:
        return math.sqrt(s_squared) if s_squared > 0 else 0.0
    return np.sqrt(np.maximum(s_squared, 0.0))


def _source(data: PriceInput, v) -> VarianceSource:
    if isinstance(data, VarianceSource):
        return data
    return VarianceSource(data, v)


def _check_pair(L: int, L_prime: int):
    if L == L_prime:
        raise InfeasibleLag("L and L_prime must differ")
    if L < 1 or L_prime < 1:
        raise InfeasibleLag("lags must be >= 1")


def _combine(vl, vlp, wl, wlp, denom):
    # 2 (wl V(L) - wlp V(L')) / denom
    if denom == 0:
        raise DegenerateInput("zero denominator in the two-lag combination")
    return 2.0 * (wl * vl - wlp * vlp) / denom


# ---------------------------------------------------------------------------
# independent noise, Brownian mid price


def s2_standard(data: PriceInput, L: int = 1, L_prime: int = 2, v: int = 1) -> SpreadEstimate:
    """Two-lag estimator assuming a Brownian mid price and iid noise."""
    _check_pair(L, L_prime)
    V = _source(data, v)
    s2 = _combine(V(L), V(L_prime), float(L_prime), float(L), float(L_prime) - float(L))
    return SpreadEstimate(s2, f"s1{int(V.v)}")


def s2_standard_median(data: PriceInput, v: int = 1, L_max: int = DEFAULT_MEDIAN_LMAX) -> SpreadEstimate:
    """Median of the two-lag estimators at lags ``(1, L)`` for ``L = 2..L_max``."""
    if L_max < 2:
        raise ValueError("L_max must be >= 2")
    V = _source(data, v)
    members = np.array([s2_standard(V, 1, L, v).s_squared for L in range(2, L_max + 1)])
    return SpreadEstimate(float(np.median(members)), f"s1{int(V.v)}med", {"L_max": float(L_max)})


# ---------------------------------------------------------------------------
# fractional Brownian mid price


def hurst_estimate(data: PriceInput, L: int = 1, v: int = 1) -> float:
    """Hurst exponent from the variances at lags ``L, 2L, 4L``."""
    V = _source(data, v)
    v1, v2, v4 = V(L), V(2 * L), V(4 * L)
    den = v2 - v1
    if den == 0:
        raise DegenerateInput("degenerate variance differences")
    return 0.5 * math.log2(abs((v4 - v2) / den))


def s2_fbm(data: PriceInput, L: int = 1, L_prime: int = 2, v: int = 1, hurst: float = 0.5) -> SpreadEstimate:
    """Two-lag estimator for an fBm mid price with known Hurst exponent.

    ``hurst`` outside (0, 1) is accepted; the formula stays defined.
    """
    _check_pair(L, L_prime)
    V = _source(data, v)
    wl = float(L_prime) ** (2.0 * hurst)
    wlp = float(L) ** (2.0 * hurst)
    s2 = _combine(V(L), V(L_prime), wl, wlp, wl - wlp)
    return SpreadEstimate(s2, f"s2{int(V.v)}", {"hurst": float(hurst)})


def s2_fbm_plugin(
    data: PriceInput, L: int = 1, L_prime: int = 2, L_hurst: int = 1, v: int = 1
) -> SpreadEstimate:
    """fBm estimator with the Hurst exponent estimated at lag ``L_hurst``.

    The estimated exponent is used as is, without clamping into (0, 1).
    """
    V = _source(data, v)
    h = hurst_estimate(V, L_hurst, v)
    est = s2_fbm(V, L, L_prime, v, h)
    return SpreadEstimate(est.s_squared, f"s2{int(V.v)}", {"hurst": h})


# ---------------------------------------------------------------------------
# exponentially autocorrelated trade signs


def rho_estimate(data: PriceInput, L: int = 1, v: int = 1) -> float:
    """Estimate of ``rho ** L`` from the variances at lags ``L, 2L, 4L``."""
    V = _source(data, v)
    v1, v2, v4 = V(L), V(2 * L), V(4 * L)
    den = 2.0 * v1 - v2
    if den == 0:
        raise DegenerateInput("degenerate variance differences")
    return math.sqrt(abs((2.0 * v2 - v4) / den)) - 1.0


def s2_ou(data: PriceInput, L: int = 1, L_prime: int = 2, v: int = 1, rho: float = 0.0) -> SpreadEstimate:
    """Two-lag estimator with sign autocorrelation ``rho`` per time step."""
    _check_pair(L, L_prime)
    V = _source(data, v)
    den = float(L_prime) * (1.0 - rho**L) - float(L) * (1.0 - rho**L_prime)
    s2 = _combine(V(L), V(L_prime), float(L_prime), float(L), den)
    return SpreadEstimate(s2, f"s3{int(V.v)}", {"rho": float(rho)})


def s2_ou_plugin(data: PriceInput, L: int = 1, v: int = 1) -> SpreadEstimate:
    """Autocorrelated-noise estimator with ``rho ** L`` eliminated.

    Uses lags ``L, 2L, 4L``; the estimated ``rho ** L`` is reported in the
    diagnostics but is not needed by the closed form.
    """
    V = _source(data, v)
    v1, v2, v4 = V(L), V(2 * L), V(4 * L)
    a = 2.0 * v1 - v2
    b = 2.0 * v2 - v4
    den = 2.0 * math.sqrt(abs(a)) - math.sqrt(abs(b))
    if den == 0:
        raise DegenerateInput("degenerate variance differences")
    s2 = 2.0 * a * a / (den * den)
    rho = math.sqrt(abs(b / a)) - 1.0 if a != 0 else float("nan")
    return SpreadEstimate(s2, f"s3{int(V.v)}", {"rho": rho})


# ---------------------------------------------------------------------------
# joint fit of all four parameters


@dataclass(frozen=True)
class FitOptions:
    """Search settings for :func:`s2_full_fit`.

    ``lambda_bounds`` is expressed in units of the time step; ``None``
    means ``(1/100, 100 n)`` with ``n`` the series length (or
    ``100 * L_max * 100`` when only a variance curve is supplied).
    """

    n_hurst: int = 50
    n_lambda: int = 50
    hurst_bounds: tuple[float, float] = (0.01, 0.99)
    lambda_bounds: tuple[float, float] | None = None
    polish: bool = True
    n_starts: int = 6
    tau: float | None = None


@dataclass(frozen=True)
class FitResult:
    s_squared: float
    sigma_squared: float
    hurst: float
    lam: float
    objective: float
    converged: bool

    def estimate(self, estimator_id: str = "s41") -> SpreadEstimate:
        return SpreadEstimate(
            self.s_squared,
            estimator_id,
            {"hurst": self.hurst, "sigma_sq": self.sigma_squared, "lambda": self.lam},
        )


def _nnls2(x1, x2, y):
    """Nonnegative least squares with two columns, vectorized over grids.

    ``x1``, ``x2`` have shape (..., m); ``y`` has shape (m,).  Returns
    coefficients ``(c1, c2)`` and the residual sum of squares.
    """
    a11 = np.einsum("...i,...i->...", x1, x1)
    a22 = np.einsum("...i,...i->...", x2, x2)
    a12 = np.einsum("...i,...i->...", x1, x2)
    b1 = x1 @ y
    b2 = x2 @ y
    yy = float(y @ y)
    det = a11 * a22 - a12 * a12
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = (a22 * b1 - a12 * b2) / det
        c2 = (a11 * b2 - a12 * b1) / det
        both = (c1 >= 0) & (c2 >= 0) & (det > 1e-14 * a11 * a22)
        s1 = np.where(a11 > 0, np.maximum(b1, 0) / a11, 0.0)
        s2 = np.where(a22 > 0, np.maximum(b2, 0) / a22, 0.0)
    rss_both = yy - c1 * b1 - c2 * b2
    rss1 = yy - s1 * b1
    rss2 = yy - s2 * b2
    use1 = rss1 <= rss2
    c1 = np.where(both, c1, np.where(use1, s1, 0.0))
    c2 = np.where(both, c2, np.where(use1, 0.0, s2))
    r = x1 * c1[..., None] + x2 * c2[..., None] - y
    return c1, c2, np.einsum("...i,...i->...", r, r)


def _design(lags, h, mu):
    h = np.asarray(h, dtype=float)[..., None]
    mu = np.asarray(mu, dtype=float)[..., None]
    return lags ** (2.0 * h), -np.expm1(-lags / mu)


def _curve(lags, a, b, h, mu):
    return a * lags ** (2.0 * h) - b * np.expm1(-lags / mu)


def s2_full_fit(
    data: PriceInput,
    L_max: int = DEFAULT_FIT_LMAX,
    v: int = 1,
    options: FitOptions | None = None,
) -> FitResult:
    """Least-squares fit of the combined fBm + autocorrelated-noise curve.

    Minimizes ``sum_l [ sigma^2 (l tau)^(2H) + S^2/2 (1 - exp(-l tau/lambda)) - V(l) ]^2``
    over ``l = 1..L_max``.  A deterministic grid over ``(H, lambda)`` with
    closed-form nonnegative inner solutions is followed by a local polish.
    """
    opts = options or FitOptions()
    if L_max < 4:
        raise ValueError("L_max must be >= 4")
    V = _source(data, v)
    lags = np.arange(1, L_max + 1, dtype=float)
    y_raw = np.array([V(int(l)) for l in lags])
    if not np.all(np.isfinite(y_raw)):
        raise ValueError("non-finite variances")

    if opts.tau is not None:
        tau = float(opts.tau)
    elif isinstance(data, LogPriceSeries):
        tau = data.tau_years
    else:
        tau = 1.0

    n_ref = V.n if V.n is not None else 100 * L_max
    mu_lo, mu_hi = opts.lambda_bounds or (1.0 / 100.0, 100.0 * n_ref)
    h_lo, h_hi = opts.hurst_bounds

    scale = float(np.max(np.abs(y_raw)))
    if scale == 0:
        return FitResult(0.0, 0.0, 0.5, mu_hi * tau, 0.0, True)
    y = y_raw / scale

    hs = np.linspace(h_lo, h_hi, opts.n_hurst)
    mus = np.geomspace(mu_lo, mu_hi, opts.n_lambda)
    H, M = np.meshgrid(hs, mus, indexing="ij")
    x1, x2 = _design(lags, H, M)
    _, _, rss = _nnls2(x1, x2, y)
    lmu_lo, lmu_hi = math.log(mu_lo), math.log(mu_hi)

    def inner(p):
        # the curve is linear in (a, b) once (H, lambda) are fixed
        u1, u2 = _design(lags, p[0], math.exp(p[1]))
        a, b, _ = _nnls2(u1, u2, y)
        return float(a), float(b), u1 * a + u2 * b - y

    lower = np.array([h_lo, lmu_lo])
    upper = np.array([h_hi, lmu_hi])

    # Profile over H: refine log(lambda) per grid row, since the coarse
    # lambda grid can hide a narrow valley in H. Local minima of the profile
    # seed the polish.
    dlmu = (lmu_hi - lmu_lo) / max(opts.n_lambda - 1, 1)
    rss_f = np.where(np.isfinite(rss), rss, np.inf)
    prof = np.full(hs.size, np.inf)
    prof_lmu = np.log(mus[np.argmin(rss_f, axis=1)])
    for i, h in enumerate(hs):
        if not np.isfinite(rss_f[i].min()):
            continue
        c = prof_lmu[i]
        res = minimize_scalar(
            lambda lm: float(_nnls2(*_design(lags, h, math.exp(lm)), y)[2]),
            bounds=(max(lmu_lo, c - dlmu), min(lmu_hi, c + dlmu)),
            method="bounded", options={"xatol": 1e-8},
        )
        prof[i], prof_lmu[i] = (res.fun, res.x) if res.fun < rss_f[i].min() else (rss_f[i].min(), c)
    is_min = prof <= minimum_filter1d(prof, size=3, mode="nearest")
    idx = np.flatnonzero(is_min & np.isfinite(prof))
    starts = idx[np.argsort(prof[idx])[: opts.n_starts]]
    best = None
    converged = False
    for i in starts:
        x = np.array([hs[i], prof_lmu[i]])
        ok = True
        if opts.polish:
            ls = least_squares(
                lambda p: inner(p)[2], x, bounds=(lower, upper),
                x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200,
            )
            x, ok = ls.x, ls.status > 0
        a, b, r = inner(x)
        obj = float(r @ r)
        if np.isfinite(obj) and (best is None or obj < best[4]):
            best = (a, b, x[0], math.exp(x[1]), obj)
            converged = ok

    if opts.polish and best is not None and best[1] > 0:
        # joint refinement: the projected problem can stall where H is weakly identified
        lo4 = np.array([0.0, 0.0, h_lo, lmu_lo])
        hi4 = np.array([np.inf, np.inf, h_hi, lmu_hi])
        x4 = np.clip([best[0], best[1], best[2], math.log(best[3])], lo4, hi4)

        def resid4(p):
            return _curve(lags, p[0], p[1], p[2], math.exp(p[3])) - y

        ls = least_squares(resid4, x4, bounds=(lo4, hi4), x_scale="jac",
                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        r = resid4(ls.x)
        obj = float(r @ r)
        if np.isfinite(obj) and obj < best[4]:
            best = (ls.x[0], ls.x[1], ls.x[2], math.exp(ls.x[3]), obj)
            converged = ls.status > 0

    # zero-spread face: with b = 0 the curve is a pure power law, which the
    # large-lambda edge of the grid can only imitate
    def power(h):
        w = lags ** (2.0 * h)
        a = max(float(w @ y) / float(w @ w), 0.0)
        r = a * w - y
        return float(r @ r), a

    pw_rss = [power(h)[0] for h in hs]
    h0 = float(hs[int(np.argmin(pw_rss))])
    ok = True
    if opts.polish:
        step = (h_hi - h_lo) / max(opts.n_hurst - 1, 1)
        res = minimize_scalar(
            lambda h: power(h)[0], bounds=(max(h_lo, h0 - step), min(h_hi, h0 + step)),
            method="bounded", options={"xatol": 1e-13},
        )
        if res.fun <= power(h0)[0]:
            h0, ok = float(res.x), bool(res.success)
    r, a = power(h0)
    if np.isfinite(r) and (best is None or r < best[4]):
        best = (a, 0.0, h0, mu_hi, r)
        converged = ok
    if best is None:
        raise ArithmeticError("fit produced a non-finite objective")

    a, b, h, mu, r = best
    objective = r * scale * scale
    if not np.isfinite(objective):
        raise ArithmeticError("fit produced a non-finite objective")
    return FitResult(
        s_squared=2.0 * b * scale,
        sigma_squared=a * scale / tau ** (2.0 * h),
        hurst=h,
        lam=mu * tau,
        objective=objective,
        converged=converged,
    )


def s2_full(data: PriceInput, L_max: int = DEFAULT_FIT_LMAX, v: int = 1, options: FitOptions | None = None) -> SpreadEstimate:
    """:func:`s2_full_fit` packaged as a :class:`SpreadEstimate`."""
    return s2_full_fit(data, L_max, v, options).estimate(f"s4{int(VarianceScheme(v))}")
