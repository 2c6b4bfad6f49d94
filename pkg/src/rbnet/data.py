"""Return panels, model features, and simulated markets.

The single market-data container is :class:`ReturnsPanel`, a dated T x n
matrix of daily simple returns. Features for the allocation networks are,
per asset: the past 5 daily returns plus 10/20/30-day mean returns and
10/20/30-day volatilities, all built strictly from data before the decision
day.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InsufficientHistoryError

FEATURES_PER_ASSET = 11  # 5 lags + 3 window means + 3 window vols
FEATURE_LOOKBACK = 30  # longest window a feature needs
_LAGS = 5
_WINDOWS = (10, 20, 30)


@dataclass
class ReturnsPanel:
    """Dated matrix of daily simple returns for a fixed asset universe.

    dates: strictly increasing datetime64[D] array of length T
    tickers: n asset identifiers
    returns: T x n array, each entry > -1
    """

    dates: np.ndarray
    tickers: list
    returns: np.ndarray

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.returns = np.asarray(self.returns, dtype=np.float64)
        self.tickers = list(self.tickers)
        if self.returns.ndim != 2:
            raise DataError("returns must be a T x n matrix")
        T, n = self.returns.shape
        if self.dates.shape != (T,):
            raise DataError(f"{T} return rows but {self.dates.shape[0]} dates")
        if len(self.tickers) != n:
            raise DataError(f"{n} return columns but {len(self.tickers)} tickers")
        if T == 0 or n == 0:
            raise DataError("panel must contain at least one row and one asset")
        if T > 1 and not np.all(self.dates[1:] > self.dates[:-1]):
            bad = int(np.flatnonzero(self.dates[1:] <= self.dates[:-1])[0]) + 1
            raise DataError(f"dates not strictly increasing at row {bad + 1} ({self.dates[bad]})")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("returns contain non-finite entries")
        if np.any(self.returns <= -1.0):
            raise DataError("returns must be greater than -1")

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def slice(self, start: int, stop: int) -> "ReturnsPanel":
        """Rows [start, stop) as a new panel; indices are clipped to range."""
        start = max(start, 0)
        return ReturnsPanel(self.dates[start:stop], self.tickers,
                            self.returns[start:stop].copy())


@dataclass
class FeatureVector:
    """Model input for one decision day: length 11*n, asset-major.

    Per asset the layout is [lag1..lag5, mean10, mean20, mean30, vol10,
    vol20, vol30]; lag1 is the return of the day before ``as_of``.
    """

    values: np.ndarray
    as_of: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


@dataclass
class SimSpec:
    """Multivariate-normal market specification."""

    mean: np.ndarray
    cov: np.ndarray
    horizon: int
    seed: int
    tickers: list = field(default_factory=list)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise DataError("cov must be n x n for the n means")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise DataError("cov must be symmetric")
        if np.linalg.eigvalsh(self.cov).min() < -1e-10 * max(1.0, np.abs(self.cov).max()):
            raise DataError("cov must be positive semi-definite")
        if self.horizon < 1:
            raise DataError("horizon must be at least 1 day")
        if not self.tickers:
            self.tickers = [f"A{i}" for i in range(n)]


def load_returns(path, format: str = "wide_csv") -> ReturnsPanel:
    """Parses a wide returns CSV: header ``date,TICKER1,...``, ISO dates,
    decimal-fraction returns. Malformed cells are rejected with their
    1-based file line and ticker."""
    if format != "wide_csv":
        raise DataError(f"unsupported format {format!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0].lower() != "date" or len(header) < 2:
            raise DataError(f"{path}: header must be 'date,TICKER1,...'")
        tickers = header[1:]
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                dates.append(np.datetime64(row[0].strip(), "D"))
            except ValueError:
                raise DataError(f"{path}: row {lineno} has invalid date {row[0]!r}") from None
            vals = np.empty(len(tickers))
            for j, cell in enumerate(row[1:]):
                cell = cell.strip()
                if not cell:
                    raise DataError(f"{path}: missing value at row {lineno}, ticker {tickers[j]!r}")
                try:
                    vals[j] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: bad value {cell!r} at row {lineno}, ticker {tickers[j]!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    dates = np.array(dates, dtype="datetime64[D]")
    if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
        bad = int(np.flatnonzero(dates[1:] <= dates[:-1])[0]) + 1
        raise DataError(f"{path}: dates not strictly increasing at row {bad + 2}")
    return ReturnsPanel(dates, tickers, np.vstack(rows))


def save_returns(panel: ReturnsPanel, path) -> None:
    """Writes a panel back to the wide CSV format accepted by load_returns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(panel.tickers))
        for i in range(panel.n_days):
            writer.writerow([str(panel.dates[i])]
                            + [format(v, ".17g") for v in panel.returns[i]])


def build_features(panel: ReturnsPanel, t: int) -> FeatureVector:
    """Features for decision day ``t`` from data strictly before ``t``."""
    if t < FEATURE_LOOKBACK:
        raise InsufficientHistoryError(
            f"day {t} needs {FEATURE_LOOKBACK} prior days of history")
    if t >= panel.n_days:
        raise DataError(f"day {t} outside panel of length {panel.n_days}")
    return FeatureVector(_feature_row(panel.returns, t), t)


def _feature_row(returns: np.ndarray, t: int) -> np.ndarray:
    n = returns.shape[1]
    out = np.empty(FEATURES_PER_ASSET * n)
    for j in range(n):
        col = returns[:t, j]
        base = FEATURES_PER_ASSET * j
        out[base:base + _LAGS] = col[-1:-_LAGS - 1:-1]
        for k, w in enumerate(_WINDOWS):
            window = col[-w:]
            out[base + _LAGS + k] = window.mean()
            out[base + _LAGS + 3 + k] = window.std(ddof=1)
    return out


def feature_matrix(panel: ReturnsPanel, days) -> np.ndarray:
    """Stacked feature rows for several decision days (rows in day order)."""
    days = np.asarray(days, dtype=int)
    if days.size and days.min() < FEATURE_LOOKBACK:
        raise InsufficientHistoryError(
            f"day {days.min()} needs {FEATURE_LOOKBACK} prior days of history")
    return np.array([_feature_row(panel.returns, int(t)) for t in days])


def simulate_returns(spec: SimSpec) -> ReturnsPanel:
    """I.i.d. multivariate-normal daily returns, reproducible by seed.

    Dates are synthetic consecutive calendar days starting 2000-01-03.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    draws = rng.multivariate_normal(spec.mean, spec.cov, size=spec.horizon,
                                    method="svd")
    np.maximum(draws, -0.999999, out=draws)  # panel invariant: returns > -1
    dates = np.datetime64("2000-01-03") + np.arange(spec.horizon)
    return ReturnsPanel(dates, spec.tickers, draws)


def append_random_asset(panel: ReturnsPanel, mu: float, sigma: float,
                        seed: int, ticker: str = "RND") -> ReturnsPanel:
    """Adds one i.i.d. Normal(mu, sigma^2) column to the panel."""
    if sigma < 0:
        raise DataError("sigma must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    col = mu + sigma * rng.standard_normal(panel.n_days)
    np.maximum(col, -0.999999, out=col)
    name = ticker
    k = 2
    while name in panel.tickers:
        name = f"{ticker}{k}"
        k += 1
    return ReturnsPanel(panel.dates, panel.tickers + [name],
                        np.column_stack([panel.returns, col]))
