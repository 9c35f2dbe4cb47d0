"""Closed-form moments and asymptotics of the variance-based estimators.

Time is measured in years and ``sigma`` is an annualized volatility, so a
lag of ``L`` steps spans ``u = L * tau`` years.  Model kinds:

* ``IID``        Brownian mid price, independent trade signs
* ``FBM_PRICE``  fractional Brownian mid price, independent trade signs
* ``OU_TRADES``  Brownian mid price, sign correlation ``exp(-|t-s|/lambda)``
* ``FULL``       fractional mid price and correlated signs
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import spreads
from .varest import VarianceScheme, increment_count

MINUTE_TAU = 1.0 / (260.0 * 510.0)


class ModelKind(str, Enum):
    IID = "iid"
    FBM_PRICE = "fbm"
    OU_TRADES = "ou"
    FULL = "full"

    @classmethod
    def from_index(cls, m: int) -> "ModelKind":
        return (cls.IID, cls.FBM_PRICE, cls.OU_TRADES, cls.FULL)[int(m) - 1]

    @property
    def index(self) -> int:
        return list(ModelKind).index(self) + 1


class UnsupportedModel(ValueError):
    """No closed form is available for this model and configuration."""


@dataclass(frozen=True)
class ModelSpec:
    """Generative model and its parameters.

    ``lambda_years`` drives the exponential sign correlation used by the
    closed forms.  ``theta_per_second`` is the mean reversion of the hidden
    Ornstein-Uhlenbeck process used by the simulator; its diffusion scale
    does not matter because only signs are observed.
    """

    kind: ModelKind = ModelKind.IID
    s: float = 0.005
    sigma: float = 0.2
    hurst: float = 0.5
    lambda_years: float | None = None
    theta_per_second: float | None = None
    tau_years: float = MINUTE_TAU

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.s < 0:
            raise ValueError("spread must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")
        if not self.tau_years > 0:
            raise ValueError("tau must be positive")
        if self.kind in (ModelKind.OU_TRADES, ModelKind.FULL):
            if self.lambda_years is None and self.theta_per_second is None:
                raise ValueError(f"model {self.kind.value} needs lambda_years or theta_per_second")
            if self.lambda_years is not None and self.lambda_years < 0:
                raise ValueError("lambda must be >= 0")
            if self.theta_per_second is not None and not self.theta_per_second > 0:
                raise ValueError("theta must be positive")

    @property
    def h(self) -> float:
        return self.hurst if self.kind in (ModelKind.FBM_PRICE, ModelKind.FULL) else 0.5

    @property
    def lam(self) -> float:
        """Sign-correlation time in years; 0 for independent signs."""
        if self.kind in (ModelKind.IID, ModelKind.FBM_PRICE):
            return 0.0
        if self.lambda_years is not None:
            return self.lambda_years
        raise UnsupportedModel("lambda_years is required for closed forms of correlated signs")

    @property
    def rho(self) -> float:
        """Sign correlation over one time step."""
        lam = self.lam
        return 0.0 if lam == 0 else math.exp(-self.tau_years / lam)

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)


def _decay(u, lam):
    # exp(-u / lam), with the lam -> 0 limit
    u = np.asarray(u, dtype=float)
    if lam == 0:
        return np.where(u == 0, 1.0, 0.0)
    return np.exp(-u / lam)


def variance_at(model: ModelSpec, u):
    """Theoretical increment variance over a horizon ``u`` (years)."""
    u = np.asarray(u, dtype=float)
    noise = 0.5 * model.s**2 * (1.0 - _decay(u, model.lam))
    out = np.abs(u) ** (2.0 * model.h) * model.sigma**2 + noise
    return float(out) if out.ndim == 0 else out


def theoretical_variance(model: ModelSpec, L):
    """Theoretical variance of the lag-``L`` increment."""
    L = np.asarray(L, dtype=float)
    if np.any(L < 1):
        raise ValueError("lag must be >= 1")
    return variance_at(model, L * model.tau_years)


def variance_curve(model: ModelSpec, lags: Sequence[int]) -> dict[int, float]:
    """``{lag: variance}`` mapping accepted by every spread estimator."""
    return {int(L): float(theoretical_variance(model, L)) for L in lags}


def c_function(x, hurst: float):
    """Covariance kernel of fBm increments over two unit intervals offset by ``x``
    (``c(1) = 1``)."""
    x = np.asarray(x, dtype=float)
    e = 2.0 * hurst
    out = 0.5 * (np.abs(2.0 - x) ** e - 2.0 * np.abs(1.0 - x) ** e + np.abs(x) ** e)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# K(u, delta): mixed second moment of squared increments of length u whose
# starting points are delta apart (delta = u means the same increment)


def cov_squared_increments(model: ModelSpec, u: float, delta: float) -> float:
    if not u > 0:
        raise ValueError("u must be positive")
    if delta > u:
        raise ValueError("delta must not exceed u")
    V = variance_at(model, u)
    s2, sig2 = model.s**2, model.sigma**2
    kind = model.kind
    if kind is ModelKind.FULL:
        raise UnsupportedModel("closed form not provided for the full model")

    if kind is ModelKind.IID:
        if delta <= 0:
            return V * V
        if delta < u:
            return V * V + 2.0 * sig2**2 * delta**2
        return V * V + 2.0 * sig2**2 * u**2 + 2.0 * sig2 * u * s2 + s2 * s2 / 4.0

    if kind is ModelKind.FBM_PRICE:
        h = model.hurst
        u2h = u ** (2.0 * h)
        if delta == u:
            return V * V + 2.0 * u2h**2 * sig2**2 + 2.0 * u2h * sig2 * s2 + s2 * s2 / 4.0
        c = c_function(delta / u, h)
        out = V * V + 2.0 * c * c * u2h**2 * sig2**2
        if delta == 0:
            out -= c * u2h * sig2 * s2
        return out

    lam = model.lam
    if delta <= 0:
        return V * V
    e = lambda t: float(_decay(t, lam))  # noqa: E731
    return (
        V * V
        + 2.0 * delta**2 * sig2**2
        + s2 * s2 / 4.0 * (e(2.0 * (u - delta)) - e(2.0 * u))
        + delta * sig2 * s2 * (2.0 * e(u - delta) - e(delta) - e(2.0 * u - delta))
    )


# ---------------------------------------------------------------------------
# finite sums appearing in the overlapping-scheme variance


def f_sum(x: float, L: int) -> float:
    """``sum_{m=1}^{L-1} exp(x m)``."""
    m = np.arange(1, L)
    return float(np.exp(x * m).sum())


def f_sum_prime(x: float, L: int) -> float:
    """``sum_{m=1}^{L-1} m exp(x m)``, the derivative of :func:`f_sum`."""
    m = np.arange(1, L)
    return float((m * np.exp(x * m)).sum())


def f_closed(x: float, L: int) -> float:
    """Quotient form ``(e^x - e^{xL}) / (1 - e^x)``; singular at ``x = 0``."""
    return (math.exp(x) - math.exp(x * L)) / (1.0 - math.exp(x))


# ---------------------------------------------------------------------------
# asymptotic variance of the empirical variance


def var_of_variance(model: ModelSpec, L: int, v: int | VarianceScheme) -> float:
    """Asymptotic ``k * Var[V_hat_v(n, L)]``.

    For the fBm model with ``v = 2, 3`` the finite-sample remainder
    :func:`xi_remainder` must be added to ``value / k``.  The overlapping
    scheme under fBm is only covered for ``H < 3/4``.
    """
    v = VarianceScheme(v)
    if L < 1:
        raise ValueError("lag must be >= 1")
    tau = model.tau_years
    s2, sig2 = model.s**2, model.sigma**2
    kind = model.kind
    if kind is ModelKind.FULL:
        raise UnsupportedModel("closed form not provided for the full model")

    if kind is ModelKind.IID:
        u = L * tau
        base = 2.0 * sig2 * u * s2 + s2 * s2 / 4.0
        if v is VarianceScheme.OVERLAPPING:
            return 2.0 / 3.0 * sig2**2 * L * (1.0 + 2.0 * L * L) * tau**2 + base
        return 2.0 * sig2**2 * u**2 + base

    if kind is ModelKind.FBM_PRICE:
        h = model.hurst
        u2h = (L * tau) ** (2.0 * h)
        if v is VarianceScheme.STRICTLY_DISJOINT:
            return 2.0 * u2h**2 * sig2**2 + 2.0 * u2h * sig2 * s2 + s2 * s2 / 4.0
        out = 2.0 * u2h**2 * sig2**2 + (4.0 - 2.0 ** (2.0 * h)) * u2h * sig2 * s2 + s2 * s2 / 4.0
        if v is VarianceScheme.OVERLAPPING:
            if h >= 0.75:
                raise UnsupportedModel("overlapping scheme under fBm requires H < 3/4")
            j = np.arange(1, L) / L
            out += 4.0 * u2h**2 * sig2**2 * float((c_function(j, h) ** 2).sum())
        return out

    lam = model.lam
    e = lambda t: float(_decay(t, lam))  # noqa: E731
    u = L * tau
    out = 2.0 * u * u * sig2**2 + s2 * s2 / 4.0 * (1.0 - e(2.0 * u)) + 2.0 * u * sig2 * s2 * (1.0 - e(u))
    if v is not VarianceScheme.OVERLAPPING:
        return out
    m = np.arange(1, L, dtype=float)
    if lam == 0:
        noise4 = 0.0
        cross = 0.0
    else:
        r = tau / lam
        # exp(-2 L r) (f_L(2r) - L + 1), summed without overflow
        noise4 = float(np.exp(-2.0 * r * (L - m)).sum()) - (L - 1) * e(2.0 * u)
        # 2 e^{-Lr} f'_L(r) - f'_L(-r) - e^{-2Lr} f'_L(r)
        cross = float((m * (2.0 * np.exp(-r * (L - m)) - np.exp(-r * m) - np.exp(-r * (2 * L - m)))).sum())
    out += 2.0 / 3.0 * tau**2 * sig2**2 * (L - 1) * L * (2 * L - 1)
    out += s2 * s2 / 2.0 * noise4
    out += 2.0 * tau * sig2 * s2 * cross
    return out


def xi_remainder(model: ModelSpec, L: int, v: int | VarianceScheme, k: int) -> float:
    """Finite-sample remainder of ``Var[V_hat_v]`` under fBm, ``v in {2, 3}``."""
    v = VarianceScheme(v)
    if v is VarianceScheme.OVERLAPPING:
        raise ValueError("remainder defined for schemes 2 and 3 only")
    if k < 2:
        raise ValueError("k must be >= 2")
    if model.kind is not ModelKind.FBM_PRICE:
        return 0.0
    h = model.hurst
    i = np.arange(k - 1, dtype=float)
    arg = -i if v is VarianceScheme.NON_OVERLAPPING else -i - (i + 1.0) / L
    c = c_function(arg, h)
    u4h = (L * model.tau_years) ** (4.0 * h)
    return float(4.0 * u4h * model.sigma**4 / k**2 * np.sum(c * c * (k - 1 - i)))


def variance_of_estimate(model: ModelSpec, n: int, L: int, v: int | VarianceScheme) -> float:
    """Leading-order ``Var[V_hat_v(n, L)]`` including the fBm remainder."""
    v = VarianceScheme(v)
    k = increment_count(n, L, v)
    out = var_of_variance(model, L, v) / k
    if model.kind is ModelKind.FBM_PRICE and v is not VarianceScheme.OVERLAPPING and k >= 2:
        out += xi_remainder(model, L, v, k)
    return out


# ---------------------------------------------------------------------------
# asymptotic variances of the spread estimators


@dataclass(frozen=True)
class AsymptoticVariance:
    value: float
    components: Mapping[str, float] = field(default_factory=dict)
    correlation_source: str = "closed_form"


def zeta(L: int, v: int | VarianceScheme) -> int:
    """Spacing factor of scheme ``v``: 1, L or L + 1."""
    v = VarianceScheme(v)
    return (1, L, L + 1)[v - 1]


def gamma_standard_special(L: int, m: int, model: ModelSpec) -> AsymptoticVariance:
    """Closed-form ``n * Var`` of the two-lag estimator with strictly disjoint
    increments and lags ``(L, m(L+1) - 1)``, independent-noise model."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if model.kind is not ModelKind.IID:
        raise UnsupportedModel("closed form available for the independent model only")
    Lp = m * (L + 1) - 1
    tau = model.tau_years
    s2 = model.s**2
    u, up = L * tau, Lp * tau
    VL, VLp = variance_at(model, u), variance_at(model, up)
    dK = cov_squared_increments(model, u, u) - VL**2
    dKp = cov_squared_increments(model, up, up) - VLp**2
    t1 = Lp * (Lp * (L + 1) / (Lp + 1) - 2 * L) * dK
    t2 = L * L * dKp
    t3 = -2.0 * Lp * L * (-2.0 * (Lp - L) / (Lp + 1) * s2 * VL + (3 * Lp - 4 * L - 1) / (Lp + 1) * s2 * s2 / 4.0)
    pref = 4.0 * (Lp + 1) / (Lp - L) ** 2
    value = pref * (t1 + t2 + t3)
    return AsymptoticVariance(
        value,
        {"prefactor": pref, "lag_term": t1, "lag_prime_term": t2, "noise_term": t3, "L_prime": float(Lp)},
        "closed_form",
    )


def gamma_two_lag(
    model: ModelSpec,
    L: int,
    L_prime: int,
    v: int | VarianceScheme,
    r: float,
    correlation_source: str = "supplied",
) -> AsymptoticVariance:
    """``n * Var`` of a two-lag estimator given the limit correlation ``r`` of
    the two empirical variances.

    Covers the known-parameter estimators of the three closed-form models;
    the weights follow from the model (``L'``, ``L'^{2H}`` ...).
    """
    v = VarianceScheme(v)
    kind = model.kind
    if kind is ModelKind.IID:
        wl, wlp, den = float(L_prime), float(L), float(L_prime - L)
    elif kind is ModelKind.FBM_PRICE:
        h2 = 2.0 * model.hurst
        wl, wlp = float(L_prime) ** h2, float(L) ** h2
        den = wl - wlp
    elif kind is ModelKind.OU_TRADES:
        rho = model.rho
        wl, wlp = float(L_prime), float(L)
        den = L_prime * (1.0 - rho**L) - L * (1.0 - rho**L_prime)
    else:
        raise UnsupportedModel("closed form not provided for the full model")
    s_l = math.sqrt(var_of_variance(model, L, v))
    s_lp = math.sqrt(var_of_variance(model, L_prime, v))
    z_l, z_lp = zeta(L, v), zeta(L_prime, v)
    a = wl * wl * z_l * s_l**2
    b = wlp * wlp * z_lp * s_lp**2
    c = -2.0 * wl * wlp * math.sqrt(z_l * z_lp) * s_l * s_lp * r
    value = 4.0 / den**2 * (a + b + c)
    return AsymptoticVariance(value, {"lag_term": a, "lag_prime_term": b, "cross_term": c}, correlation_source)


def sigma_matrix(model: ModelSpec, lags: Sequence[int], v: int | VarianceScheme, corr: np.ndarray) -> np.ndarray:
    """Limit covariance of ``sqrt(n) V_hat`` at several lags from a correlation matrix."""
    s = np.array([math.sqrt(zeta(L, v) * var_of_variance(model, L, v)) for L in lags])
    return np.outer(s, s) * np.asarray(corr, dtype=float)


def hurst_plugin_gradient(V1: float, V2: float, V4: float) -> np.ndarray:
    """Weight vector of the delta method for the Hurst plug-in estimator at lags (1, 2)."""
    return np.array([(V4 - V2) ** 2, 2.0 * V2 * (V2 - V4 - V1) + 2.0 * V4 * V1, (V1 - V2) ** 2])


def gamma_hurst_plugin(model: ModelSpec, v: int | VarianceScheme, corr: np.ndarray, source: str = "supplied") -> AsymptoticVariance:
    """``n * Var`` of the fBm estimator at lags (1, 2) with the exponent
    estimated at lag 1.  The underlying limit theorem assumes ``H <= 1/2``."""
    V1, V2, V4 = (theoretical_variance(model, L) for L in (1, 2, 4))
    W = hurst_plugin_gradient(V1, V2, V4)
    Sig = sigma_matrix(model, (1, 2, 4), v, corr)
    value = 4.0 / (V4 - 2.0 * V2 + V1) ** 4 * float(W @ Sig @ W)
    return AsymptoticVariance(value, {"valid_hurst_range": float(model.hurst <= 0.5)}, source)


def ou_plugin_gradient(x: float, y: float, z: float) -> np.ndarray:
    """Gradient of ``2 (2x - y)^2 / (2 sqrt(2x - y) - sqrt(2y - z))^2``."""
    A = 2.0 * x - y
    B = 2.0 * y - z
    sa, sb = math.sqrt(A), math.sqrt(B)
    D = 2.0 * sa - sb
    dA = 4.0 * A / D**2 - 4.0 * A * sa / D**3
    dB = 2.0 * A * A / (D**3 * sb)
    return np.array([2.0 * dA, -dA + 2.0 * dB, -dB])


def gamma_ou_plugin(model: ModelSpec, L: int, v: int | VarianceScheme, corr: np.ndarray, source: str = "supplied") -> AsymptoticVariance:
    """``n * Var`` of the autocorrelated-noise estimator with ``rho`` estimated."""
    lags = (L, 2 * L, 4 * L)
    W = ou_plugin_gradient(*(theoretical_variance(model, l) for l in lags))
    Sig = sigma_matrix(model, lags, v, corr)
    return AsymptoticVariance(float(W @ Sig @ W), {}, source)


# ---------------------------------------------------------------------------
# trade-sign correlation and the two-point/Gaussian cokurtosis


def ou_sign_correlation(theta_per_second, lag_seconds):
    """Correlation of the signs of a stationary OU process ``lag`` apart.

    Equal to ``(2/pi) arctan((e^{2 theta lag} - 1)^{-1/2})``, evaluated in the
    equivalent form ``(2/pi) arcsin(e^{-theta lag})``.
    """
    x = np.asarray(theta_per_second, dtype=float) * np.asarray(lag_seconds, dtype=float)
    if np.any(x < 0):
        raise ValueError("theta and lag must be nonnegative")
    out = 2.0 / np.pi * np.arcsin(np.exp(-x))
    return float(out) if out.ndim == 0 else out


RHO_KEYS = ("21", "31", "41", "32", "42", "43")


def cokurtosis(rho_g: float, sigma_g_sq: float, rhos: Mapping[str, float], variant: str) -> float:
    """Fourth cross moment of Gaussian-plus-sign-difference variables.

    ``minus``: ``E[(Ga + Y2 - Y1)^2 (Gb + Y4 - Y3)^2]``;
    ``plus``:  ``E[(Ga + Y3 - Y1)^2 (Gb + Y4 - Y2)^2]``,
    with ``corr(Ga, Gb) = rho_g``, ``Var(G) = sigma_g_sq`` and Rademacher
    ``Y`` whose pairwise correlations ``rhos["ji"]`` multiply along the chain.
    """
    r = {k: float(rhos.get(k, 0.0)) for k in RHO_KEYS}
    g4 = (1.0 + 2.0 * rho_g**2) * sigma_g_sq**2
    if variant == "minus":
        return (
            g4
            + 2.0 * sigma_g_sq * (2.0 - r["43"] - r["21"])
            + 4.0 * (1.0 - r["21"]) * (1.0 - r["43"])
            + 4.0 * rho_g * sigma_g_sq * (r["31"] - r["41"] - r["32"] + r["42"])
        )
    if variant == "plus":
        return (
            g4
            + 2.0 * sigma_g_sq * (2.0 - r["42"] - r["31"])
            + 4.0 * (1.0 - r["42"] - r["31"] + r["43"] * r["21"])
            + 4.0 * rho_g * sigma_g_sq * (r["43"] - r["32"] - r["41"] + r["21"])
        )
    raise ValueError("variant must be 'plus' or 'minus'")


def chain_rhos(r21: float, r32: float, r43: float) -> dict[str, float]:
    """All six pairwise correlations of a multiplicative sign chain."""
    return {
        "21": r21, "32": r32, "43": r43,
        "31": r21 * r32, "42": r32 * r43, "41": r21 * r32 * r43,
    }


# ---------------------------------------------------------------------------
# sensitivity of the fBm estimators to one perturbed observation


def impulse_response(model: ModelSpec, n: int, L: int, v: int | VarianceScheme, x: float, mode: str) -> float:
    """Estimator output on theoretical variances after a price impulse ``x``.

    An impulse in one observation adds ``2 x^2 / k_v(n, l)`` to the
    empirical variance at lag ``l``; the lags ``L, 2L, 4L`` are perturbed.
    ``mode`` is ``hurst``, ``spread_known_h`` or ``spread_plugin``.
    """
    v = VarianceScheme(v)
    lags = (L, 2 * L, 4 * L)
    curve = {l: float(theoretical_variance(model, l)) + 2.0 * x * x / increment_count(n, l, v) for l in lags}
    if mode == "hurst":
        return spreads.hurst_estimate(curve, L, v)
    if mode == "spread_known_h":
        return spreads.s2_fbm(curve, L, 2 * L, v, model.h).s_squared
    if mode == "spread_plugin":
        return spreads.s2_fbm_plugin(curve, L, 2 * L, L, v).s_squared
    raise ValueError(f"unknown mode {mode!r}")


def fig1_curve(s_grid, n_grid, L: int = 1, m: int = 2, sigma: float = 0.2, tau: float = MINUTE_TAU):
    """Asymptotic standard deviation ``sqrt(Gamma / n)`` on a grid of spreads and sample sizes.

    Returns an array of shape ``(len(n_grid), len(s_grid))``.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    out = np.empty((len(n_grid), s_grid.size))
    for j, s in enumerate(s_grid):
        g = gamma_standard_special(L, m, ModelSpec(ModelKind.IID, s=s, sigma=sigma, tau_years=tau)).value
        for i, n in enumerate(n_grid):
            out[i, j] = math.sqrt(max(g, 0.0) / n)
    return out
