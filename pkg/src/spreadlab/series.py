"""Price series containers, CSV ingestion and bar aggregation.

All prices are stored as natural logs.  Ingestion converts raw prices once;
nothing downstream ever sees a price level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple

import numpy as np

#: seconds per year used to express a time step in years: 260 days x 510 minutes
DEFAULT_ANNUALIZATION = 260.0 * 510.0 * 60.0

OHLC_FIELDS = ("open", "high", "low", "close")


class SeriesError(ValueError):
    """Malformed price data.  ``row`` is the 1-based data row, if known."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"{message} at row {row}")
        self.row = row


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LogPriceSeries:
    """Evenly spaced log prices.

    Parameters
    ----------
    values : array_like
        Log prices, at least two, all finite.
    step_seconds : float
        Sampling step in seconds.
    annualization : float
        Seconds per year, used by :attr:`tau_years`.
    """

    values: np.ndarray
    step_seconds: float = 60.0
    annualization: float = DEFAULT_ANNUALIZATION

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1 or arr.size < 2:
            raise SeriesError("a price series needs at least two observations")
        if not np.all(np.isfinite(arr)):
            raise SeriesError("log prices must be finite")
        if not self.step_seconds > 0:
            raise SeriesError("step_seconds must be positive")
        if not self.annualization > 0:
            raise SeriesError("annualization must be positive")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def tau_years(self) -> float:
        return self.step_seconds / self.annualization


class OhlcBar(NamedTuple):
    open: float
    high: float
    low: float
    close: float


@dataclass(frozen=True, eq=False)
class OhlcSeries:
    """Contiguous open/high/low/close log-price bars, stored column-wise."""

    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    step_seconds: float = 60.0
    annualization: float = DEFAULT_ANNUALIZATION

    def __post_init__(self):
        cols = {}
        for name in OHLC_FIELDS:
            cols[name] = _frozen(getattr(self, name))
            object.__setattr__(self, name, cols[name])
        sizes = {c.size for c in cols.values()}
        if len(sizes) != 1 or any(c.ndim != 1 for c in cols.values()):
            raise SeriesError("open/high/low/close must be 1-d and equally long")
        if cols["close"].size < 1:
            raise SeriesError("at least one bar is required")
        if not all(np.all(np.isfinite(c)) for c in cols.values()):
            raise SeriesError("bar prices must be finite")
        lo_bad = cols["low"] > np.minimum(cols["open"], cols["close"])
        hi_bad = cols["high"] < np.maximum(cols["open"], cols["close"])
        bad = np.flatnonzero(lo_bad | hi_bad)
        if bad.size:
            raise SeriesError("bar violates low <= open,close <= high", row=int(bad[0]) + 1)
        if not self.step_seconds > 0:
            raise SeriesError("step_seconds must be positive")

    def __len__(self) -> int:
        return self.close.size

    @property
    def bars(self) -> list[OhlcBar]:
        return list(self)

    def __iter__(self) -> Iterator[OhlcBar]:
        for row in zip(self.open, self.high, self.low, self.close):
            yield OhlcBar(*map(float, row))

    @property
    def mid_range(self) -> np.ndarray:
        return 0.5 * (self.high + self.low)

    def closes(self) -> LogPriceSeries:
        return LogPriceSeries(self.close, self.step_seconds, self.annualization)


def aggregate_bars(fine: LogPriceSeries | np.ndarray, factor: int, traded=None) -> OhlcSeries:
    """Collapse consecutive windows of ``factor`` fine prices into bars.

    A trailing partial window is dropped.  With a boolean ``traded`` mask,
    open, high and low are taken over traded points only and a window
    without trades is flat at its (carried) close.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if isinstance(fine, LogPriceSeries):
        values, step, ann = fine.values, fine.step_seconds * factor, fine.annualization
    else:
        values, step, ann = np.asarray(fine, dtype=float), float(factor), DEFAULT_ANNUALIZATION
    n_bars = values.size // factor
    if n_bars < 1:
        raise ValueError("fine series shorter than one aggregation window")
    win = values[: n_bars * factor].reshape(n_bars, factor)
    close = win[:, -1]
    if traded is None:
        return OhlcSeries(win[:, 0], win.max(axis=1), win.min(axis=1), close, step, ann)
    mask = np.asarray(traded, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError("traded mask must match the fine series")
    mask = mask[: n_bars * factor].reshape(n_bars, factor)
    any_trade = mask.any(axis=1)
    first = np.argmax(mask, axis=1)
    open_ = np.where(any_trade, win[np.arange(n_bars), first], close)
    high = np.where(any_trade, np.where(mask, win, -np.inf).max(axis=1), close)
    low = np.where(any_trade, np.where(mask, win, np.inf).min(axis=1), close)
    return OhlcSeries(open_, high, low, close, step, ann)


# ---------------------------------------------------------------------------
# CSV


def _parse_timestamp(text: str, row: int) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text.replace("Z", "+00:00")).timestamp()
    except ValueError:
        raise SeriesError(f"unparseable timestamp {text!r}", row=row) from None


def load_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    price_scale: str = "raw",
    step_seconds: float | None = None,
    annualization: float = DEFAULT_ANNUALIZATION,
) -> LogPriceSeries | OhlcSeries:
    """Read a close-only or OHLC price file.

    ``schema`` maps the canonical names ``timestamp, open, high, low, close``
    to the file's column names; missing keys default to the canonical name.
    With ``price_scale="raw"`` prices are log-transformed and must be
    strictly positive; with ``"log"`` they are taken as already logged.

    The step is taken from ``step_seconds`` when given, otherwise inferred
    as the median timestamp difference.
    """
    if price_scale not in ("raw", "log"):
        raise ValueError("price_scale must be 'raw' or 'log'")
    cols = {k: k for k in ("timestamp",) + OHLC_FIELDS}
    cols.update(schema or {})

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if cols["close"] not in header:
            raise SeriesError(f"missing column {cols['close']!r}")
        has_ohlc = all(cols[f] in header for f in OHLC_FIELDS)
        fields = OHLC_FIELDS if has_ohlc else ("close",)
        has_ts = cols["timestamp"] in header
        if not has_ts and step_seconds is None:
            raise SeriesError(f"missing column {cols['timestamp']!r}")

        data = {f: [] for f in fields}
        stamps = []
        for row_no, rec in enumerate(reader, start=1):
            for f in fields:
                raw = rec.get(cols[f])
                try:
                    val = float(raw)
                except (TypeError, ValueError):
                    raise SeriesError(f"non-numeric {f} value {raw!r}", row=row_no) from None
                if price_scale == "raw":
                    if not val > 0:
                        raise SeriesError("non-positive price", row=row_no)
                    val = math.log(val)
                data[f].append(val)
            if has_ts:
                ts = _parse_timestamp(rec[cols["timestamp"]], row_no)
                if stamps and ts <= stamps[-1]:
                    raise SeriesError("non-monotone timestamp", row=row_no)
                stamps.append(ts)

    if step_seconds is None:
        if len(stamps) < 2:
            raise SeriesError("cannot infer the time step from fewer than two rows")
        step_seconds = float(np.median(np.diff(stamps)))

    if has_ohlc:
        return OhlcSeries(*(data[f] for f in OHLC_FIELDS), step_seconds, annualization)
    return LogPriceSeries(data["close"], step_seconds, annualization)


def write_csv(
    path: str | Path,
    series: LogPriceSeries | OhlcSeries,
    price_scale: str = "log",
    start: float = 0.0,
    precision: int = 17,
) -> None:
    """Write a series with epoch-second timestamps ``start + i * step``.

    ``precision`` significant digits are written; 17 round-trips a double.
    """
    if price_scale not in ("raw", "log"):
        raise ValueError("price_scale must be 'raw' or 'log'")
    if isinstance(series, OhlcSeries):
        names = OHLC_FIELDS
        columns = [getattr(series, f) for f in names]
    else:
        names = ("close",)
        columns = [series.values]
    if price_scale == "raw":
        columns = [np.exp(c) for c in columns]
    fmt = f"{{:.{precision}g}}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp",) + tuple(names))
        for i, vals in enumerate(zip(*columns)):
            ts = start + i * series.step_seconds
            w.writerow([fmt.format(ts)] + [fmt.format(v) for v in vals])
