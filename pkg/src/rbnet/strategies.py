"""Concrete allocation policies for the backtest engine."""

from dataclasses import replace

import numpy as np

from . import benchmarks as bench
from . import nets
from .backtest import Strategy
from .data import FEATURE_LOOKBACK, ReturnsPanel, build_features, feature_matrix
from .errors import TrainingError
from .nets import TrainConfig
from .risk import Allocation, solve_risk_budget

E2E_MODES = nets.MODES
BENCHMARK_NAMES = bench.BENCHMARK_KINDS
STRATEGY_NAMES = tuple(E2E_MODES) + tuple(BENCHMARK_NAMES)


class FixMixStrategy(Strategy):
    name = "fix_mix"

    def allocate(self, panel, t, cov):
        return bench.fix_mix(panel.n_assets)


class NominalRPStrategy(Strategy):
    name = "nominal_rp"

    def allocate(self, panel, t, cov):
        return bench.nominal_rp(cov)


class FilteredRPStrategy(Strategy):
    """Risk parity on the screened sub-universe; logs empty-screen fallbacks."""

    def __init__(self, spec: bench.BenchmarkSpec):
        self.spec = spec
        self.name = spec.kind
        self.fallback_days = []

    def reset(self, panel, schedule):
        self.fallback_days = []

    def allocate(self, panel, t, cov):
        if self.spec.kind == "rp_positive":
            if bench.screen_survivors(panel, t, self.spec).size == 0:
                self.fallback_days.append(int(t))
        return bench.rp_filtered(panel, t, cov, self.spec)


class EndToEndStrategy(Strategy):
    """Rolling-retrained network policy (any of the four network modes).

    Retraining on block boundary t0 uses the panel rows strictly before t0;
    the per-block seed is derived from (base seed, t0) so it cannot depend on
    market data. Warm starts reuse the previous block's parameters.
    """

    def __init__(self, cfg: TrainConfig, base_seed=None, name=None):
        self.cfg = cfg
        self.base_seed = cfg.seed if base_seed is None else base_seed
        self.name = name or cfg.mode
        self.params = None
        self.gate_log = []
        self._norm = None

    def reset(self, panel, schedule):
        self.params = None
        self.gate_log = []
        self._norm = None

    def retrain(self, panel: ReturnsPanel, t0: int) -> None:
        pad = max(FEATURE_LOOKBACK, self.cfg.cov_window)
        window = panel.slice(t0 - self.cfg.lookback - pad, t0)
        seed = np.random.SeedSequence([self.base_seed, int(t0)])
        init = self.params if (self.cfg.warm_start and self.params is not None) else None
        self.params = nets.train(window, self.cfg, init=init, seed=seed)
        if self.cfg.normalize_features:
            days = nets.training_days(window.n_days, self.cfg)
            self._norm = nets.feature_normalizer(feature_matrix(window, days))
        if self.cfg.gated:
            open_now = self.params.mu >= 0.5
            self.gate_log.append({
                "day": int(t0),
                "date": str(panel.dates[t0]),
                "mu": self.params.mu.copy(),
                "open": open_now.copy(),
            })

    def _features(self, panel, t):
        x = build_features(panel, t).values
        if self._norm is not None:
            mean, sd = self._norm
            x = (x - mean) / sd
        return x

    def allocate(self, panel: ReturnsPanel, t: int, cov) -> Allocation:
        if self.params is None:
            raise TrainingError("no trained parameters available", step=-1)
        x = self._features(panel, t)
        if self.cfg.mode == "model_free":
            return nets.forward_alloc_model_free(self.params, x)
        budget = nets.forward_budget(self.params, x)
        if not self.cfg.gated:
            return solve_risk_budget(cov, budget, tol=self.cfg.solver_tol)
        gates = nets.gate_values(self.params.mu, self.cfg.gate_sigma, training=False)
        filter_mode = "with_filter" if self.cfg.mode == "gated_filter" else "no_filter"
        sub_budget, sub_cov, active = nets.apply_gates(budget, gates, filter_mode, cov)
        sub = solve_risk_budget(sub_cov, sub_budget, tol=self.cfg.solver_tol)
        if active.shape[0] == panel.n_assets:
            return sub
        z = np.zeros(panel.n_assets)
        raw = np.zeros(panel.n_assets)
        z[active] = sub.z
        raw[active] = sub.raw_y
        return Allocation(z=z, raw_y=raw)


def make_strategy(name: str, cfg: TrainConfig, base_seed=None,
                  topk: int = 4, screen_lookback: int = 30) -> Strategy:
    """Strategy factory keyed by the names accepted in run configs."""
    if name in E2E_MODES:
        return EndToEndStrategy(replace(cfg, mode=name), base_seed=base_seed)
    if name == "fix_mix":
        return FixMixStrategy()
    if name == "nominal_rp":
        return NominalRPStrategy()
    if name in ("rp_positive", "rp_topk"):
        return FilteredRPStrategy(bench.BenchmarkSpec(kind=name, k=topk,
                                                      lookback=screen_lookback))
    raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
