"""Hot loops, compiled with numba when available.

Every kernel has a numpy (or scipy) twin with the same signature.  The
compiled path is used unless numba is missing or the environment variable
``SPREADLAB_DISABLE_NUMBA`` is set to a non-empty value other than ``0``.
Both paths are importable directly (``*_nb`` / ``*_np``) so that tests and
``bench/bench_kernels.py`` can compare them.
"""

import math
import os

import numpy as np
from scipy.signal import lfilter

try:
    import numba as nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

_flag = os.environ.get("SPREADLAB_DISABLE_NUMBA", "")
USE_NUMBA = HAS_NUMBA and _flag in ("", "0")

KAPPA1 = 4.0 * math.log(2.0)
KAPPA2 = math.sqrt(8.0 / math.pi)
_SQ2M1 = math.sqrt(2.0) - 1.0
# f(eps) = A eps^2 + B eps sqrt(C(beta) - D eps^2) + beta/2 - gamma
_CS_A = 2.0 * KAPPA2**2 * (1.0 - math.sqrt(2.0)) + KAPPA1
_CS_B = 2.0 * KAPPA2 * _SQ2M1
_CS_D = KAPPA1 - KAPPA2**2


def njit(*args, **kwargs):
    if HAS_NUMBA:
        return nb.njit(*args, **kwargs)
    return lambda func: func


# ---------------------------------------------------------------------------
# stationary AR(1): x[0] = x0, x[t] = a x[t-1] + b e[t]


@njit(cache=True)
def ar1_nb(x0, a, b, eps):
    n = eps.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    out[0] = x0
    for t in range(1, n):
        out[t] = a * out[t - 1] + b * eps[t]
    return out


def ar1_np(x0, a, b, eps):
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        return np.empty(0)
    out = np.empty_like(eps)
    out[0] = x0
    if eps.size > 1:
        out[1:] = lfilter([b], [1.0, -a], eps[1:], zi=np.array([a * x0]))[0]
    return out


# ---------------------------------------------------------------------------
# carry-forward: positions with keep == False repeat the last kept value


@njit(cache=True)
def carry_forward_nb(x, keep):
    n = x.shape[0]
    out = np.empty(n)
    last = x[0]
    for i in range(n):
        if keep[i] or i == 0:
            last = x[i]
        out[i] = last
    return out


def carry_forward_np(x, keep):
    x = np.asarray(x, dtype=float)
    idx = np.where(keep, np.arange(x.size), 0)
    np.maximum.accumulate(idx, out=idx)
    return x[idx]


# ---------------------------------------------------------------------------
# Corwin-Schultz: per two-bar window solve f(eps) = 0 on a bracket


@njit(cache=True)
def _cs_f(eps, beta, gamma):
    inner = eps * eps * (KAPPA2 * KAPPA2 - KAPPA1) + 0.5 * beta
    if inner < 0.0:
        inner = 0.0
    return _CS_A * eps * eps + _CS_B * eps * math.sqrt(inner) + 0.5 * beta - gamma


@njit(cache=True)
def cs_solve_nb(beta, gamma, tol, max_iter):
    m = beta.shape[0]
    eps_out = np.zeros(m)
    fallback = np.zeros(m, dtype=np.bool_)
    for j in range(m):
        b = beta[j]
        g = gamma[j]
        lo = 0.0
        hi = min(math.sqrt(g) + 1.0, math.sqrt(0.5 * b / _CS_D))
        f_lo = _cs_f(lo, b, g)
        if abs(f_lo) < tol:
            continue
        f_hi = _cs_f(hi, b, g)
        if f_lo * f_hi > 0.0:
            fallback[j] = True
            continue
        mid = 0.5 * (lo + hi)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            f_mid = _cs_f(mid, b, g)
            if abs(f_mid) < tol or hi - lo < 1e-300:
                break
            if (f_mid < 0.0) == (f_lo < 0.0):
                lo = mid
                f_lo = f_mid
            else:
                hi = mid
        eps_out[j] = mid
    return eps_out, fallback


def _cs_f_np(eps, beta, gamma):
    inner = np.maximum(eps * eps * (KAPPA2**2 - KAPPA1) + 0.5 * beta, 0.0)
    return _CS_A * eps * eps + _CS_B * eps * np.sqrt(inner) + 0.5 * beta - gamma


def cs_solve_np(beta, gamma, tol, max_iter):
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    lo = np.zeros_like(beta)
    hi = np.minimum(np.sqrt(gamma) + 1.0, np.sqrt(0.5 * beta / _CS_D))
    f_lo = _cs_f_np(lo, beta, gamma)
    f_hi = _cs_f_np(hi, beta, gamma)
    root_at_zero = np.abs(f_lo) < tol
    fallback = ~root_at_zero & (f_lo * f_hi > 0.0)
    active = ~root_at_zero & ~fallback
    eps = np.zeros_like(beta)
    neg_lo = f_lo < 0.0
    for _ in range(max_iter):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        f_mid = _cs_f_np(mid, beta, gamma)
        eps = np.where(active, mid, eps)
        done = active & ((np.abs(f_mid) < tol) | (hi - lo < 1e-300))
        active &= ~done
        same = (f_mid < 0.0) == neg_lo
        lo = np.where(active & same, mid, lo)
        hi = np.where(active & ~same, mid, hi)
    return eps, fallback


# ---------------------------------------------------------------------------
# Durbin-Levinson sampling of a stationary Gaussian sequence


@njit(cache=True)
def durbin_levinson_nb(acov, z):
    n = z.shape[0]
    out = np.empty(n)
    phi = np.zeros(n)
    prev = np.zeros(n)
    v = acov[0]
    out[0] = math.sqrt(v) * z[0]
    for t in range(1, n):
        # update partial autocorrelations
        acc = acov[t]
        for j in range(t - 1):
            acc -= prev[j] * acov[t - 1 - j]
        k = acc / v
        phi[t - 1] = k
        for j in range(t - 1):
            phi[j] = prev[j] - k * prev[t - 2 - j]
        v = v * (1.0 - k * k)
        if v < 0.0:
            v = 0.0
        mean = 0.0
        for j in range(t):
            mean += phi[j] * out[t - 1 - j]
        out[t] = mean + math.sqrt(v) * z[t]
        for j in range(t):
            prev[j] = phi[j]
    return out


def durbin_levinson_np(acov, z):
    n = z.shape[0]
    out = np.empty(n)
    phi = np.zeros(0)
    v = acov[0]
    out[0] = math.sqrt(v) * z[0]
    for t in range(1, n):
        k = (acov[t] - phi @ acov[t - 1 : 0 : -1]) / v
        phi = np.append(phi - k * phi[::-1], k)
        v = max(v * (1.0 - k * k), 0.0)
        out[t] = phi @ out[t - 1 :: -1] + math.sqrt(v) * z[t]
    return out


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    ar1 = ar1_nb
    carry_forward = carry_forward_nb
    cs_solve = cs_solve_nb
    durbin_levinson = durbin_levinson_nb
else:
    ar1 = ar1_np
    carry_forward = carry_forward_np
    cs_solve = cs_solve_np
    durbin_levinson = durbin_levinson_np


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
