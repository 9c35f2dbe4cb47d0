"""Uncentered empirical variances of lagged log-price increments.

Three index schemes are supported for a lag ``L`` on ``n`` prices
``p[0..n-1]`` (0-based):

* overlapping:       pairs ``(i, i+L)`` for ``i < n - L``
* non-overlapping:   pairs ``(iL, (i+1)L)`` for ``i < (n-1)//L``
* strictly disjoint: pairs ``(i(L+1), i(L+1)+L)`` for ``i < n//(L+1)``,
  leaving one unused point between consecutive increments.

No mean is subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Union

import numpy as np

from .series import LogPriceSeries


class VarianceScheme(IntEnum):
    OVERLAPPING = 1
    NON_OVERLAPPING = 2
    STRICTLY_DISJOINT = 3


PriceInput = Union[LogPriceSeries, np.ndarray, Mapping[int, float]]


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    lag: int
    scheme: VarianceScheme
    count: int


class InfeasibleLag(ValueError):
    """The series is too short for the requested lag and scheme."""


def increment_count(n: int, L: int, v: int | VarianceScheme) -> int:
    """Number of squared increments averaged by scheme ``v`` at lag ``L``."""
    v = VarianceScheme(v)
    if L < 1:
        raise InfeasibleLag(f"lag must be >= 1, got {L}")
    if v is VarianceScheme.OVERLAPPING:
        k = n - L
    elif v is VarianceScheme.NON_OVERLAPPING:
        k = (n - 1) // L
    else:
        k = n // (L + 1)
    if k < 1:
        raise InfeasibleLag(f"series of length {n} too short for lag {L} with scheme {int(v)}")
    return k


def increments(values: np.ndarray, L: int, v: int | VarianceScheme) -> np.ndarray:
    """The lag-``L`` increments selected by scheme ``v``."""
    values = np.asarray(values, dtype=float)
    v = VarianceScheme(v)
    k = increment_count(values.size, L, v)
    if v is VarianceScheme.OVERLAPPING:
        return values[L:] - values[:-L]
    if v is VarianceScheme.NON_OVERLAPPING:
        p = values[: k * L + 1 : L]
        return np.diff(p)
    start = np.arange(k) * (L + 1)
    return values[start + L] - values[start]


def _values(series) -> np.ndarray:
    if isinstance(series, LogPriceSeries):
        return series.values
    return np.asarray(series, dtype=float)


def empirical_variance(series: LogPriceSeries | np.ndarray, L: int, v: int | VarianceScheme = 1) -> VarianceEstimate:
    """Mean squared lag-``L`` increment under scheme ``v``."""
    x = _values(series)
    d = increments(x, L, v)
    return VarianceEstimate(float(np.dot(d, d) / d.size), int(L), VarianceScheme(v), d.size)


def variance_curve(series: LogPriceSeries | np.ndarray, lags, v: int | VarianceScheme = 1) -> np.ndarray:
    """Empirical variances for several lags at once."""
    x = _values(series)
    return np.array([empirical_variance(x, int(L), v).value for L in lags])


class VarianceSource:
    """Uniform lag -> variance lookup over prices or a precomputed curve.

    Estimators accept either a price series (variances computed on demand,
    cached per lag) or a mapping ``{lag: variance}``, which lets theoretical
    curves be pushed through exactly the same formulas.
    """

    def __init__(self, data: PriceInput, v: int | VarianceScheme = 1):
        self.v = VarianceScheme(v)
        self._cache: dict[int, float] = {}
        if isinstance(data, Mapping):
            self._prices = None
            self._cache.update({int(k): float(val) for k, val in data.items()})
        else:
            self._prices = _values(data)

    @property
    def n(self) -> int | None:
        return None if self._prices is None else self._prices.size

    def __call__(self, L: int) -> float:
        L = int(L)
        if L not in self._cache:
            if self._prices is None:
                raise InfeasibleLag(f"no variance supplied for lag {L}")
            self._cache[L] = empirical_variance(self._prices, L, self.v).value
        return self._cache[L]

    def count(self, L: int) -> int | None:
        return None if self._prices is None else increment_count(self._prices.size, L, self.v)
