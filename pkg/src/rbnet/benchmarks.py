"""Nominal comparison strategies: risk parity, equal-weight fix-mix, and
risk parity on a screened sub-universe (positive-return or top-k screens)."""

from dataclasses import dataclass

import numpy as np

from .data import ReturnsPanel
from .errors import InsufficientHistoryError
from .risk import Allocation, CovMatrix, RiskBudget, solve_risk_budget

BENCHMARK_KINDS = ("nominal_rp", "fix_mix", "rp_positive", "rp_topk")


@dataclass
class BenchmarkSpec:
    kind: str
    k: int = 4
    lookback: int = 30

    def __post_init__(self):
        if self.kind not in BENCHMARK_KINDS:
            raise ValueError(f"kind must be one of {BENCHMARK_KINDS}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.lookback < 1:
            raise ValueError("lookback must be at least 1")


def nominal_rp(cov: CovMatrix) -> Allocation:
    """Equal risk contributions: the budget is 1/n for every asset."""
    n = cov.n
    return solve_risk_budget(cov, RiskBudget(np.full(n, 1.0 / n)))


def fix_mix(n: int) -> Allocation:
    """Rebalance to equal weights every day."""
    if n < 1:
        raise ValueError("need at least one asset")
    z = np.full(n, 1.0 / n)
    return Allocation(z=z, raw_y=z.copy())


def _screen(panel: ReturnsPanel, t: int, spec: BenchmarkSpec) -> np.ndarray:
    """Survivor indices by cumulative simple return over the lookback window
    strictly before day t. Ties in the top-k ranking break toward the lower
    asset index."""
    if t < spec.lookback:
        raise InsufficientHistoryError(
            f"day {t} needs {spec.lookback} prior days for the return screen")
    block = panel.returns[t - spec.lookback:t]
    cum = np.prod(1.0 + block, axis=0) - 1.0
    if spec.kind == "rp_positive":
        return np.flatnonzero(cum > 0.0)
    k = min(spec.k, panel.n_assets)
    order = np.argsort(-cum, kind="stable")  # stable sort = lower index wins ties
    return np.sort(order[:k])


def rp_filtered(panel: ReturnsPanel, t: int, cov: CovMatrix,
                spec: BenchmarkSpec) -> Allocation:
    """Nominal risk parity on the screened sub-universe.

    Excluded assets get weight exactly zero. An empty positive-return
    survivor set falls back to the full universe; callers that need to flag
    the fallback can re-run :func:`screen_survivors`.
    """
    if spec.kind not in ("rp_positive", "rp_topk"):
        raise ValueError("rp_filtered needs an rp_positive or rp_topk spec")
    survivors = _screen(panel, t, spec)
    if survivors.size == 0:
        return nominal_rp(cov)
    if survivors.size == panel.n_assets:
        return nominal_rp(cov)
    sub = nominal_rp(cov.restrict(survivors))
    n = panel.n_assets
    z = np.zeros(n)
    raw = np.zeros(n)
    z[survivors] = sub.z
    raw[survivors] = sub.raw_y
    return Allocation(z=z, raw_y=raw)


def screen_survivors(panel: ReturnsPanel, t: int, spec: BenchmarkSpec) -> np.ndarray:
    """Public view of the screen, for reporting which assets survived."""
    return _screen(panel, t, spec)
