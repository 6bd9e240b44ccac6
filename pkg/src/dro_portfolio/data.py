"""Price ingestion, repair, returns, and scenario windows.

CSV layout: first column is the date (ISO-8601), one ticker per remaining
column, empty cell means missing.  Missing interior prices are filled by
linear interpolation; tickers missing at either boundary are dropped.
Scenario sets are sliced from trailing return windows with uniform
empirical weights.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed CSV content; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OrderingError(ValueError):
    """Dates out of order or duplicated."""


@dataclass(frozen=True)
class CsvLayout:
    """Shape of the input file; defaults match the documented layout."""

    date_column: str = "date"
    delimiter: str = ","


@dataclass(frozen=True)
class PriceSeries:
    """Adjusted close prices, n tickers by T dates; NaN flags a missing cell."""

    dates: tuple
    tickers: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if len(set(self.tickers)) != len(self.tickers):
            raise ValueError("duplicate tickers")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise OrderingError("dates must be strictly increasing")
        if prices.shape != (len(self.tickers), len(self.dates)):
            raise ValueError("price matrix shape does not match labels")

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.prices)


@dataclass(frozen=True)
class ReturnMatrix:
    """Simple per-period returns, n assets by T-1 periods; every entry > -1."""

    returns: np.ndarray
    tickers: tuple = ()
    risk_free_index: int | None = None

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=float)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if not np.all(np.isfinite(returns)):
            raise ValueError("returns must be finite")
        if np.any(returns <= -1.0):
            raise ValueError("every return must exceed -1")


@dataclass(frozen=True)
class ScenarioSet:
    """m joint return scenarios with empirical weights and per-asset bounds."""

    scenarios: np.ndarray
    probabilities: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray
    tickers: tuple = ()
    risk_free_index: int | None = None

    def __post_init__(self):
        scen = np.asarray(self.scenarios, dtype=float)
        prob = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "scenarios", scen)
        object.__setattr__(self, "probabilities", prob)
        object.__setattr__(self, "x_min", np.asarray(self.x_min, dtype=float))
        object.__setattr__(self, "x_max", np.asarray(self.x_max, dtype=float))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if np.any(prob < 0) or abs(prob.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must lie on the simplex")
        if np.any(scen <= -1.0):
            raise ValueError("every scenario return must exceed -1")

    @property
    def m(self) -> int:
        return int(self.scenarios.shape[0])

    @property
    def n(self) -> int:
        return int(self.scenarios.shape[1])

    def to_json(self) -> str:
        doc = {
            "tickers": list(self.tickers),
            "scenarios": self.scenarios.tolist(),
            "probabilities": self.probabilities.tolist(),
        }
        return json.dumps(doc)


def load_prices(path, layout: CsvLayout | None = None) -> PriceSeries:
    """Parse the CSV at path into a PriceSeries with missing cells flagged.

    Raises ParseError with the offending line number on malformed rows and
    OrderingError on non-monotone or duplicate dates.
    """
    layout = layout or CsvLayout()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=layout.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if len(header) < 2:
            raise ParseError("need a date column and at least one ticker", 1)
        tickers = [h.strip() for h in header[1:]]
        if len(set(tickers)) != len(tickers):
            raise ParseError("duplicate tickers in header", 1)
        dates = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", lineno
                )
            dates.append(row[0].strip())
            cells = []
            for ticker, cell in zip(tickers, row[1:]):
                cell = cell.strip()
                if cell == "":
                    cells.append(np.nan)
                    continue
                try:
                    cells.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"bad price {cell!r} for {ticker}", lineno
                    ) from None
            rows.append(cells)
    prices = np.array(rows, dtype=float).T if rows else np.zeros((len(tickers), 0))
    return PriceSeries(dates=tuple(dates), tickers=tuple(tickers), prices=prices)


def interpolate_missing(series: PriceSeries) -> PriceSeries:
    """Fill interior gaps linearly; drop tickers missing at either boundary.

    Observed cells are untouched.  Dropped tickers are reported through the
    module logger, not raised.
    """
    keep = []
    dropped = []
    repaired_rows = []
    for i, ticker in enumerate(series.tickers):
        row = series.prices[i]
        obs = np.flatnonzero(~np.isnan(row))
        if obs.size == 0 or obs[0] != 0 or obs[-1] != row.size - 1:
            dropped.append(ticker)
            continue
        if obs.size == row.size:
            repaired_rows.append(row.copy())
        else:
            idx = np.arange(row.size)
            repaired_rows.append(np.interp(idx, obs, row[obs]))
        keep.append(ticker)
    if dropped:
        log.warning("dropped tickers with missing boundary prices: %s", dropped)
    prices = (
        np.vstack(repaired_rows)
        if repaired_rows
        else np.zeros((0, len(series.dates)))
    )
    return PriceSeries(dates=series.dates, tickers=tuple(keep), prices=prices)


def compute_returns(series: PriceSeries) -> ReturnMatrix:
    """Simple returns (S(t) - S(t-1)) / S(t-1); requires a repaired series."""
    prices = series.prices
    if np.any(np.isnan(prices)):
        raise ValueError("series still has missing cells; repair it first")
    bad = np.argwhere(prices <= 0)
    if bad.size:
        i, t = bad[0]
        raise ValueError(
            f"price must be positive: {series.tickers[i]} at {series.dates[t]}"
        )
    returns = prices[:, 1:] / prices[:, :-1] - 1.0
    bad = np.argwhere(returns <= -1.0)
    if bad.size:
        i, t = bad[0]
        raise ValueError(
            f"return at or below -1: {series.tickers[i]} at {series.dates[t + 1]}"
        )
    return ReturnMatrix(returns=returns, tickers=series.tickers)


def append_risk_free(
    returns: ReturnMatrix, annual_rate: float, periods_per_year: int
) -> ReturnMatrix:
    """Add a constant-return asset from geometric annual-rate conversion."""
    if annual_rate <= -1.0:
        raise ValueError("annual_rate must exceed -1")
    if periods_per_year < 1:
        raise ValueError("periods_per_year must be at least 1")
    per_period = (1.0 + annual_rate) ** (1.0 / periods_per_year) - 1.0
    row = np.full((1, returns.returns.shape[1]), per_period)
    tickers = returns.tickers + ("RF",) if returns.tickers else ()
    return ReturnMatrix(
        returns=np.vstack([returns.returns, row]),
        tickers=tickers,
        risk_free_index=returns.returns.shape[0],
    )


def build_scenario_set(returns: ReturnMatrix, window: tuple) -> ScenarioSet:
    """Scenario set from return columns [start, stop); uniform weights."""
    start, stop = window
    n_cols = returns.returns.shape[1]
    if not (0 <= start < stop <= n_cols):
        raise ValueError(f"window {window} out of bounds for {n_cols} columns")
    block = returns.returns[:, start:stop]
    m = block.shape[1]
    scenarios = block.T.copy()
    return ScenarioSet(
        scenarios=scenarios,
        probabilities=np.full(m, 1.0 / m),
        x_min=block.min(axis=1),
        x_max=block.max(axis=1),
        tickers=returns.tickers,
        risk_free_index=returns.risk_free_index,
    )
