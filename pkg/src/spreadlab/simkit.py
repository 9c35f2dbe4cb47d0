"""Simulators for the mid price, the trade signs and observed prices.

Observed log price = mid + (S/2) * sign.  The mid price is a Brownian or
fractional Brownian path; signs are iid, the signs of a stationary
Ornstein-Uhlenbeck path, or a multiplicative Rademacher chain.

Random streams are derived from ``SeedSequence(seed, spawn_key=(trial,))``
so every trial is reproducible on its own, whatever the execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft

from . import _kernels
from .series import DEFAULT_ANNUALIZATION, LogPriceSeries, OhlcSeries, aggregate_bars
from .theory import MINUTE_TAU, ModelKind, ModelSpec

SIM_DAY_MINUTES = 480


class NoiseKind(str, Enum):
    IID_SIGNS = "iid"
    BINARIZED_OU = "ou"
    RADEMACHER_CHAIN = "chain"


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def annual_sigma_from_daily(daily_sigma: float, hurst: float = 0.5, day_minutes: int = SIM_DAY_MINUTES, tau: float = MINUTE_TAU) -> float:
    """Annualized volatility giving standard deviation ``daily_sigma`` over a
    day of ``day_minutes`` one-minute steps of ``tau`` years."""
    return daily_sigma / (day_minutes * tau) ** hurst


# ---------------------------------------------------------------------------
# mid price


def gen_brownian(n: int, sigma: float, tau: float, seed=None) -> np.ndarray:
    """Brownian path of ``n`` points started at 0, step variance ``sigma^2 tau``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = _rng(seed)
    path = np.empty(n)
    path[0] = 0.0
    np.cumsum(rng.standard_normal(n - 1) * (sigma * math.sqrt(tau)), out=path[1:])
    return path


def fgn_autocovariance(k, hurst: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    e = 2.0 * hurst
    return 0.5 * (np.abs(k + 1.0) ** e - 2.0 * k**e + np.abs(k - 1.0) ** e)


def _embedding_half(m: int) -> int:
    # smallest half-length >= m whose doubled size has only small prime factors
    size = sp_fft.next_fast_len(2 * m)
    while size % 2:
        size = sp_fft.next_fast_len(size + 1)
    return size // 2


@lru_cache(maxsize=32)
def _circulant_eigs(m: int, hurst: float):
    g = fgn_autocovariance(np.arange(_embedding_half(m) + 1), hurst)
    row = np.concatenate([g, g[-2:0:-1]])
    lam = sp_fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    lam = np.maximum(lam, 0.0)
    out = np.sqrt(lam / row.size)
    out.setflags(write=False)
    return out


def gen_fgn(m: int, hurst: float, seed=None, method: str = "auto") -> np.ndarray:
    """``m`` unit-variance fractional Gaussian noise samples.

    Circulant embedding is exact when the embedding spectrum is
    nonnegative; otherwise (or with ``method="levinson"``) the sequential
    Durbin-Levinson recursion is used.
    """
    if not 0 < hurst < 1:
        raise ValueError("hurst must lie in (0, 1)")
    rng = _rng(seed)
    if m == 0:
        return np.empty(0)
    if method not in ("auto", "circulant", "levinson"):
        raise ValueError(f"unknown method {method!r}")
    if method != "levinson":
        sq = _circulant_eigs(m, float(hurst))
        if sq is not None:
            w = rng.standard_normal(sq.size) + 1j * rng.standard_normal(sq.size)
            return sp_fft.fft(sq * w).real[:m]
        if method == "circulant":
            raise ArithmeticError("circulant embedding is not nonnegative definite")
    acov = fgn_autocovariance(np.arange(m), hurst)
    return _kernels.durbin_levinson(acov, rng.standard_normal(m))


def gen_fbm(n: int, hurst: float, sigma: float, tau: float, seed=None, method: str = "auto") -> np.ndarray:
    """fBm path of ``n`` points started at 0 with
    ``Var(B[t+k] - B[t]) = sigma^2 (k tau)^(2H)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    inc = gen_fgn(n - 1, hurst, seed, method) * (sigma * tau**hurst)
    path = np.empty(n)
    path[0] = 0.0
    np.cumsum(inc, out=path[1:])
    return path


# ---------------------------------------------------------------------------
# trade signs


def gen_signs_iid(n: int, seed=None) -> np.ndarray:
    rng = _rng(seed)
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


def gen_signs_ou(n: int, theta_per_second: float, step_seconds: float = 1.0, seed=None) -> np.ndarray:
    """Signs of a stationary OU path sampled every ``step_seconds``.

    Uses the exact transition ``x' = a x + sqrt(1 - a^2) e`` with
    ``a = exp(-theta step)`` and unit stationary variance.
    """
    if not theta_per_second > 0:
        raise ValueError("theta must be positive")
    rng = _rng(seed)
    a = math.exp(-theta_per_second * step_seconds)
    eps = rng.standard_normal(n)
    x = _kernels.ar1(eps[0], a, math.sqrt(1.0 - a * a), eps)
    return np.where(x < 0.0, -1.0, 1.0)


def gen_signs_chain(n: int, rho: float, seed=None) -> np.ndarray:
    """Rademacher chain with ``corr(Y_i, Y_j) = rho^|i - j|``.

    ``Y_1`` is a uniform sign and each later value flips the previous one
    with probability ``(1 - rho) / 2``.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    rng = _rng(seed)
    u = rng.random(n)
    z = np.where(u < 0.5 * (1.0 + rho), 1.0, -1.0)
    z[0] = 1.0 if u[0] < 0.5 else -1.0
    return np.cumprod(z)


# ---------------------------------------------------------------------------
# assembled paths


@dataclass(frozen=True)
class SimConfig:
    """One simulated trading day.

    ``model.sigma`` is annualized and ``model.tau_years`` is the duration of
    one bar; the fine grid has ``bar_factor`` points per bar.  ``rho`` is the
    per-fine-step correlation of the Rademacher chain.
    """

    model: ModelSpec = field(
        default_factory=lambda: ModelSpec(ModelKind.IID, s=0.005, sigma=annual_sigma_from_daily(0.03))
    )
    n_fine: int = 28_800
    bar_factor: int = 60
    seed: int = 0
    liquidity_prob: float = 1.0
    noise_kind: NoiseKind | None = None
    rho: float | None = None

    def __post_init__(self):
        if self.n_fine < self.bar_factor or self.bar_factor < 1:
            raise ValueError("need n_fine >= bar_factor >= 1")
        if not 0 < self.liquidity_prob <= 1:
            raise ValueError("liquidity_prob must lie in (0, 1]")
        nk = self.noise_kind
        if nk is None:
            correlated = self.model.kind in (ModelKind.OU_TRADES, ModelKind.FULL)
            nk = NoiseKind.BINARIZED_OU if correlated else NoiseKind.IID_SIGNS
        object.__setattr__(self, "noise_kind", NoiseKind(nk))
        if self.noise_kind is NoiseKind.BINARIZED_OU and self.model.theta_per_second is None:
            raise ValueError("binarized OU noise needs model.theta_per_second")
        if self.noise_kind is NoiseKind.RADEMACHER_CHAIN and self.chain_rho is None:
            raise ValueError("Rademacher chain noise needs rho or model.lambda_years")

    @property
    def fine_tau(self) -> float:
        return self.model.tau_years / self.bar_factor

    @property
    def fine_step_seconds(self) -> float:
        return self.model.tau_years * DEFAULT_ANNUALIZATION / self.bar_factor

    @property
    def chain_rho(self) -> float | None:
        if self.rho is not None:
            return self.rho
        if self.model.lambda_years:
            return math.exp(-self.fine_tau / self.model.lambda_years)
        return None

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class SimPath:
    fine_log_prices: np.ndarray
    fine_mid: np.ndarray
    fine_signs: np.ndarray
    spread: float
    step_seconds: float = 1.0
    traded: np.ndarray | None = None

    def bars(self, factor: int) -> OhlcSeries:
        """OHLC bars; with thinning, open/high/low come from actual trades."""
        return aggregate_bars(LogPriceSeries(self.fine_log_prices, self.step_seconds), factor, self.traded)


def trial_streams(seed: int, trial: int, k: int = 3) -> list[np.random.Generator]:
    """Independent generators for one trial: mid price, signs, thinning."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return [np.random.default_rng(s) for s in ss.spawn(k)]


def assemble(config: SimConfig, trial: int = 0) -> SimPath:
    """Simulate mid price and signs on the fine grid and combine them."""
    model = config.model
    n = config.n_fine
    g_mid, g_sign, _ = trial_streams(config.seed, trial)
    if model.kind in (ModelKind.FBM_PRICE, ModelKind.FULL) and model.hurst != 0.5:
        mid = gen_fbm(n, model.hurst, model.sigma, config.fine_tau, g_mid)
    else:
        mid = gen_brownian(n, model.sigma, config.fine_tau, g_mid)
    nk = config.noise_kind
    if nk is NoiseKind.IID_SIGNS:
        signs = gen_signs_iid(n, g_sign)
    elif nk is NoiseKind.BINARIZED_OU:
        signs = gen_signs_ou(n, model.theta_per_second, config.fine_step_seconds, g_sign)
    else:
        signs = gen_signs_chain(n, config.chain_rho, g_sign)
    prices = mid + 0.5 * model.s * signs
    return SimPath(prices, mid, signs, model.s, config.fine_step_seconds)


def thin_infrequent(path: SimPath, liquidity_prob: float, seed=None) -> SimPath:
    """Keep each fine observation with probability ``liquidity_prob``;
    otherwise repeat the previous observed value.  The first point is kept."""
    if not 0 < liquidity_prob <= 1:
        raise ValueError("liquidity_prob must lie in (0, 1]")
    if liquidity_prob == 1:
        return path
    rng = _rng(seed)
    keep = rng.random(path.fine_log_prices.size) < liquidity_prob
    keep[0] = True
    cf = _kernels.carry_forward
    return SimPath(
        cf(path.fine_log_prices, keep),
        cf(path.fine_mid, keep),
        cf(path.fine_signs, keep),
        path.spread,
        path.step_seconds,
        keep,
    )


def simulate(config: SimConfig, trial: int = 0) -> SimPath:
    """:func:`assemble` followed by thinning when ``liquidity_prob < 1``."""
    path = assemble(config, trial)
    if config.liquidity_prob < 1:
        path = thin_infrequent(path, config.liquidity_prob, trial_streams(config.seed, trial)[2])
    return path


def simulate_day(config: SimConfig, trial: int = 0) -> tuple[LogPriceSeries, OhlcSeries]:
    """Bar-level closes and bars for one simulated day."""
    bars = simulate(config, trial).bars(config.bar_factor)
    return bars.closes(), bars
