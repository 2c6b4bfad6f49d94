"""Rolling-window backtest engine, drawdown machinery, performance
statistics, and the hypothesis-test arithmetic used by the seed studies.

The engine walks decision days in blocks: at each block boundary the
strategy may retrain on the days strictly before the block, then allocates
daily with the day's features and trailing covariance, realizing that day's
returns. Nothing downstream of a day ever influences that day's allocation.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import FEATURE_LOOKBACK, ReturnsPanel
from .errors import RBNetError, UndefinedStatisticError
from .risk import Allocation, sample_covariance

TRADING_DAYS_PER_YEAR = 252


@dataclass
class BacktestSchedule:
    """Decision-day range plus the train/hold rhythm."""

    lookback: int = 150
    retrain_every: int = 25
    start: int | None = None
    end: int | None = None

    def resolve(self, n_days: int) -> "BacktestSchedule":
        start = self.start if self.start is not None else max(self.lookback, FEATURE_LOOKBACK)
        end = self.end if self.end is not None else n_days - 1
        sched = BacktestSchedule(self.lookback, self.retrain_every, start, end)
        if sched.retrain_every < 1:
            raise ValueError("retrain_every must be at least 1")
        if sched.start < max(sched.lookback, FEATURE_LOOKBACK):
            raise ValueError(
                f"start {sched.start} is before max(lookback, {FEATURE_LOOKBACK})")
        if sched.end < sched.start:
            raise ValueError("end must not precede start")
        if sched.end >= n_days:
            raise ValueError(f"end {sched.end} outside panel of {n_days} days")
        return sched


@dataclass
class WealthSeries:
    """Backtest trajectory: wealth includes the 1.0 base at index 0, so
    wealth[i + 1] = wealth[i] * (1 + daily_returns[i])."""

    dates: np.ndarray
    wealth: np.ndarray
    daily_returns: np.ndarray
    allocations: np.ndarray
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.wealth = np.asarray(self.wealth, dtype=np.float64)
        self.daily_returns = np.asarray(self.daily_returns, dtype=np.float64)
        if self.wealth.shape[0] != self.daily_returns.shape[0] + 1:
            raise ValueError("wealth must have one more entry than the returns")
        if np.any(self.wealth <= 0.0):
            raise ValueError("wealth must stay strictly positive")
        compounded = self.wealth[:-1] * (1.0 + self.daily_returns)
        if np.abs(compounded - self.wealth[1:]).max(initial=0.0) > 1e-12 * np.abs(self.wealth).max():
            raise ValueError("wealth does not compound the daily returns")


@dataclass
class PerfStats:
    """The six annualized statistics reported per strategy."""

    ann_return: float
    ann_volatility: float
    sharpe: float
    mdd: float
    calmar: float
    return_over_avg_dd: float

    def as_dict(self) -> dict:
        return {
            "ann_return": self.ann_return,
            "ann_volatility": self.ann_volatility,
            "sharpe": self.sharpe,
            "mdd": self.mdd,
            "calmar": self.calmar,
            "return_over_avg_dd": self.return_over_avg_dd,
        }


class Strategy:
    """Allocation policy interface for the engine.

    ``retrain`` is called at every block boundary with the first decision day
    of the block; ``allocate`` is called once per decision day and must use
    only data strictly before that day.
    """

    name = "strategy"

    def reset(self, panel: ReturnsPanel, schedule: BacktestSchedule) -> None:
        pass

    def retrain(self, panel: ReturnsPanel, t0: int) -> None:
        pass

    def allocate(self, panel: ReturnsPanel, t: int, cov) -> Allocation:
        raise NotImplementedError


def run_backtest(strategy: Strategy, panel: ReturnsPanel,
                 schedule: BacktestSchedule, cov_window: int = 30) -> WealthSeries:
    """Walks the decision days, retraining at block boundaries.

    A failed allocation (solver stall, degenerate selection) is logged and
    the previous day's allocation is carried forward; a failure on the very
    first day falls back to equal weights.
    """
    sched = schedule.resolve(panel.n_days)
    strategy.reset(panel, sched)
    n = panel.n_assets
    days = np.arange(sched.start, sched.end + 1)
    m = days.shape[0]
    weights = np.empty((m, n))
    rets = np.empty(m)
    failures = []
    prev = np.full(n, 1.0 / n)
    for i, t in enumerate(days):
        t = int(t)
        if (t - sched.start) % sched.retrain_every == 0:
            try:
                strategy.retrain(panel, t)
            except RBNetError as exc:
                failures.append({"day": t, "stage": "retrain", "error": str(exc)})
        cov = sample_covariance(panel, t, cov_window)
        try:
            alloc = strategy.allocate(panel, t, cov)
            prev = alloc.z
        except RBNetError as exc:
            failures.append({"day": t, "stage": "allocate", "error": str(exc)})
        weights[i] = prev
        rets[i] = prev @ panel.returns[t]
    wealth = np.empty(m + 1)
    wealth[0] = 1.0
    np.cumprod(1.0 + rets, out=wealth[1:])
    return WealthSeries(dates=panel.dates[days], wealth=wealth,
                        daily_returns=rets, allocations=weights,
                        failures=failures)


def drawdown_series(wealth) -> np.ndarray:
    """dd_t = 1 - wealth_t / running_max_t, elementwise in [0, 1)."""
    w = np.asarray(wealth.wealth if isinstance(wealth, WealthSeries) else wealth,
                   dtype=np.float64)
    return 1.0 - w / np.maximum.accumulate(w)


def perf_stats(wealth, periods_per_year: int = TRADING_DAYS_PER_YEAR) -> PerfStats:
    """Annualized statistics of a wealth trajectory.

    ann_return is geometric; sharpe divides it by annualized volatility
    (zero risk-free rate); raises UndefinedStatisticError when volatility or
    drawdown is zero, carrying whatever was computable.
    """
    if isinstance(wealth, WealthSeries):
        w, r = wealth.wealth, wealth.daily_returns
    else:
        w = np.asarray(wealth, dtype=np.float64)
        r = w[1:] / w[:-1] - 1.0
    T = r.shape[0]
    if T < 2:
        raise ValueError("need at least two return periods")
    ann_return = float(w[-1] ** (periods_per_year / T) - 1.0)
    ann_vol = float(r.std(ddof=1) * np.sqrt(periods_per_year))
    dd = drawdown_series(w)
    mdd = float(dd.max())
    partial = {"ann_return": ann_return, "ann_volatility": ann_vol, "mdd": mdd}
    if ann_vol == 0.0:
        raise UndefinedStatisticError("sharpe undefined: zero volatility",
                                      partial=partial)
    sharpe = ann_return / ann_vol
    partial["sharpe"] = sharpe
    if mdd == 0.0:
        raise UndefinedStatisticError("calmar undefined: zero max drawdown",
                                      partial=partial)
    return PerfStats(
        ann_return=ann_return,
        ann_volatility=ann_vol,
        sharpe=sharpe,
        mdd=mdd,
        calmar=ann_return / mdd,
        return_over_avg_dd=ann_return / float(dd.mean()),
    )


def ztest_two_sample(m1: float, s1: float, n1: int,
                     m2: float, s2: float, n2: int) -> float:
    """Z = (m1 - m2) / sqrt(s1^2/n1 + s2^2/n2)."""
    if n1 < 2 or n2 < 2:
        raise ValueError("need at least two observations per sample")
    if s1 <= 0.0 or s2 <= 0.0:
        raise ValueError("sample standard deviations must be positive")
    return (m1 - m2) / np.sqrt(s1**2 / n1 + s2**2 / n2)


def ztest_one_sample(m: float, s: float, n: int, benchmark_value: float) -> float:
    """Z = (m - benchmark) / (s / sqrt(n))."""
    if n < 2:
        raise ValueError("need at least two observations")
    if s <= 0.0:
        raise ValueError("sample standard deviation must be positive")
    return (m - benchmark_value) / (s / np.sqrt(n))
