import numpy as np
import pytest

from rbnet.backtest import BacktestSchedule, run_backtest
from rbnet.errors import TrainingError
from rbnet.nets import TrainConfig
from rbnet.strategies import EndToEndStrategy, make_strategy

from conftest import make_panel


def cfg_for(mode="model_based", **kw):
    base = dict(hidden=5, eta=10.0, steps=3, lookback=50, retrain_every=20,
                objective="sharpe", mode=mode, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def noisy_panel(seed=0, T=180, n=3):
    rng = np.random.default_rng(seed)
    return make_panel(rng.normal(3e-4, 0.009, size=(T, n)))


class TestEndToEndStrategy:
    def test_allocate_before_retrain_rejected(self):
        strat = EndToEndStrategy(cfg_for())
        with pytest.raises(TrainingError):
            strat.allocate(noisy_panel(), 60, None)

    def test_warm_and_cold_start_diverge_after_first_block(self):
        panel = noisy_panel(1)
        sched = BacktestSchedule(lookback=50, retrain_every=20, start=50, end=120)
        runs = {}
        for warm in (True, False):
            strat = EndToEndStrategy(cfg_for(warm_start=warm), base_seed=4)
            series = run_backtest(strat, panel, sched)
            runs[warm] = series.allocations
        # identical first block (same init), different afterwards
        assert np.array_equal(runs[True][:20], runs[False][:20])
        assert not np.array_equal(runs[True][20:], runs[False][20:])

    def test_retrains_are_deterministic(self):
        panel = noisy_panel(2)
        sched = BacktestSchedule(lookback=50, retrain_every=25, start=50, end=110)
        a = run_backtest(EndToEndStrategy(cfg_for(), base_seed=9), panel, sched)
        b = run_backtest(EndToEndStrategy(cfg_for(), base_seed=9), panel, sched)
        assert np.array_equal(a.allocations, b.allocations)

    def test_feature_normalization_changes_result_and_stays_causal(self):
        panel = noisy_panel(3)
        sched = BacktestSchedule(lookback=50, retrain_every=20, start=50, end=120)
        raw = run_backtest(EndToEndStrategy(cfg_for(), base_seed=1), panel, sched)
        norm_cfg = cfg_for(normalize_features=True)
        norm = run_backtest(EndToEndStrategy(norm_cfg, base_seed=1), panel, sched)
        assert not np.array_equal(raw.allocations, norm.allocations)
        # normalization constants come from the training window only
        mutated = panel.returns.copy()
        mutated[121:] = 0.25
        norm2 = run_backtest(EndToEndStrategy(norm_cfg, base_seed=1),
                             make_panel(mutated), sched)
        assert np.array_equal(norm.allocations, norm2.allocations)

    def test_gate_log_recorded_per_block(self):
        panel = noisy_panel(4)
        sched = BacktestSchedule(lookback=50, retrain_every=20, start=50, end=110)
        strat = EndToEndStrategy(cfg_for(mode="gated_filter"), base_seed=2)
        run_backtest(strat, panel, sched)
        assert len(strat.gate_log) == 4  # blocks at 50, 70, 90, 110
        for rec in strat.gate_log:
            assert rec["mu"].shape == (3,)
            assert rec["open"].dtype == bool

    def test_all_gates_closed_at_inference_carries_forward(self):
        panel = noisy_panel(5)
        sched = BacktestSchedule(lookback=50, retrain_every=100, start=50, end=55)
        strat = EndToEndStrategy(cfg_for(mode="gated_filter", steps=0), base_seed=0)

        class Sabotaged(EndToEndStrategy):
            def retrain(self, p, t0):
                super().retrain(p, t0)
                self.params.mu = np.full(p.n_assets, -1.0)  # every gate shut

        strat = Sabotaged(cfg_for(mode="gated_filter", steps=0), base_seed=0)
        series = run_backtest(strat, panel, sched)
        assert len(series.failures) == len(series.daily_returns)
        assert np.allclose(series.allocations, 1 / 3)  # equal-weight fallback

    def test_factory_rejects_unknown_name(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            make_strategy("carry_trade", cfg_for())

    def test_factory_sets_mode_per_name(self):
        for name in ("model_free", "model_based", "gated_filter", "gated_no_filter"):
            strat = make_strategy(name, cfg_for(mode="model_based"))
            assert strat.cfg.mode == name
            assert strat.name == name
