"""End-to-end risk-budgeting portfolios.

A small neural network learns per-asset risk budgets from market features;
a differentiable convex allocation layer turns budgets into long-only
weights; optional stochastic gates filter assets out of the universe; a
rolling-window engine backtests everything against nominal benchmarks.
"""

from ._kernels import backend_name
from .backtest import (BacktestSchedule, PerfStats, Strategy, WealthSeries,
                       drawdown_series, perf_stats, run_backtest,
                       ztest_one_sample, ztest_two_sample)
from .benchmarks import BenchmarkSpec, fix_mix, nominal_rp, rp_filtered
from .calibration import default_sim_spec
from .data import (FeatureVector, ReturnsPanel, SimSpec, append_random_asset,
                   build_features, load_returns, simulate_returns)
from .nets import (NetworkParams, RiskReward, TrainConfig, apply_gates,
                   forward_alloc_model_free, forward_budget, full_gradient,
                   gate_values, load_params, objective_eval, save_params,
                   train, window_objective)
from .risk import (Allocation, CovMatrix, RBJacobians, RiskBudget,
                   rb_jacobian, risk_contributions, sample_covariance,
                   solve_risk_budget)
from .strategies import EndToEndStrategy, make_strategy

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BacktestSchedule", "BenchmarkSpec", "CovMatrix",
    "EndToEndStrategy", "FeatureVector", "NetworkParams", "PerfStats",
    "RBJacobians", "ReturnsPanel", "RiskBudget", "RiskReward", "SimSpec",
    "Strategy", "TrainConfig", "WealthSeries", "append_random_asset",
    "apply_gates", "backend_name", "build_features", "default_sim_spec",
    "drawdown_series", "fix_mix", "forward_alloc_model_free",
    "forward_budget", "full_gradient", "gate_values", "load_params",
    "load_returns", "make_strategy", "nominal_rp", "objective_eval",
    "perf_stats", "rb_jacobian", "risk_contributions", "rp_filtered",
    "run_backtest", "sample_covariance", "save_params", "simulate_returns",
    "solve_risk_budget", "train", "window_objective", "ztest_one_sample",
    "ztest_two_sample",
]
