"""Report assembly and file emission for the command-line runs.

Outputs are deterministic functions of (config, seed, data): no timestamps,
stable key order, fixed float formatting. Statistics in report JSON carry 10
significant digits; CSV series carry 17 so they round-trip exactly.

Seed sweeps and grid cells run in a bounded process pool (RBNET_WORKERS
overrides the size; 1 forces serial execution); results are assembled in
configuration order afterwards, so parallelism never changes an output.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .backtest import (WealthSeries, perf_stats, run_backtest,
                       ztest_one_sample, ztest_two_sample)
from .config import RunConfig
from .data import ReturnsPanel
from .errors import RBNetError, UndefinedStatisticError
from .strategies import E2E_MODES, EndToEndStrategy, FilteredRPStrategy, make_strategy

LOW_POWER_SEEDS = 30  # normal approximation gets shaky below this
MAIN_METRIC = "return_over_avg_dd"
MAX_WORKERS = 8


def _pool_size(n_jobs: int) -> int:
    env = os.environ.get("RBNET_WORKERS", "").strip()
    if env:
        return max(1, min(int(env), n_jobs))
    return max(1, min(os.cpu_count() or 1, MAX_WORKERS, n_jobs))


def _run_jobs(worker, jobs):
    """Runs (key, callable-args) jobs serially or in a process pool; returns
    {key: result} where result is the worker return or a caught error."""
    results = {}
    workers = _pool_size(len(jobs))
    if workers <= 1:
        for key, args in jobs:
            results[key] = _guarded(worker, args)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(_guarded, worker, args) for key, args in jobs}
        for key, fut in futures.items():
            results[key] = fut.result()
    return results


def _guarded(worker, args):
    try:
        return worker(*args)
    except RBNetError as exc:
        return {"error": str(exc)}


@dataclass
class BacktestReport:
    """Everything one backtest run produces, before serialization."""

    config_echo: dict
    tickers: list
    stats: dict            # strategy -> stats dict (or error record)
    wealth: dict           # strategy -> WealthSeries
    gate_log: dict         # strategy -> list of per-retraining gate records
    failures: dict         # strategy -> solver-failure log
    screen_fallbacks: dict  # strategy -> days the screen fell back to all assets


def _sig10(x: float) -> float:
    if x is None or not math.isfinite(x):
        return x
    return float(f"{x:.10g}")


def _stats_or_error(wealth: WealthSeries) -> dict:
    try:
        return {k: _sig10(v) for k, v in perf_stats(wealth).as_dict().items()}
    except UndefinedStatisticError as exc:
        out = {k: _sig10(v) for k, v in (exc.partial or {}).items()}
        out["error"] = str(exc)
        return out


def run_strategies(cfg: RunConfig, panel: ReturnsPanel,
                   base_seed=None) -> BacktestReport:
    """Runs every configured strategy on the panel and gathers the report."""
    stats, wealth, gates, failures, fallbacks = {}, {}, {}, {}, {}
    for name in cfg.strategies:
        strat = make_strategy(name, cfg.train, base_seed=base_seed,
                              topk=cfg.topk, screen_lookback=cfg.screen_lookback)
        strat.reset(panel, cfg.schedule)
        series = run_backtest(strat, panel, cfg.schedule, cov_window=cfg.cov_window)
        wealth[name] = series
        stats[name] = _stats_or_error(series)
        failures[name] = series.failures
        if isinstance(strat, EndToEndStrategy) and strat.gate_log:
            gates[name] = strat.gate_log
        if isinstance(strat, FilteredRPStrategy) and strat.fallback_days:
            fallbacks[name] = strat.fallback_days
    return BacktestReport(config_echo=cfg.echo, tickers=list(panel.tickers),
                          stats=stats, wealth=wealth, gate_log=gates,
                          failures=failures, screen_fallbacks=fallbacks)


# ---------------------------------------------------------------------------
# file emission


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class _Emitter:
    """Tracks written files so a failed run leaves no partial outputs."""

    def __init__(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.out_dir = out_dir
        self.written = []

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.written.append(p)
        return p

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.written:
                if os.path.exists(p):
                    os.remove(p)
        return False


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_backtest_outputs(report: BacktestReport, out_dir) -> list:
    """Writes report.json, wealth.csv, allocations.csv and (when gated
    strategies ran) gates.csv. Returns the paths written."""
    names = list(report.wealth)
    payload = {
        "version": 1,
        "config": report.config_echo,
        "tickers": report.tickers,
        "strategies": {
            name: {
                "stats": report.stats[name],
                "final_wealth": _sig10(float(report.wealth[name].wealth[-1])),
                "n_days": int(report.wealth[name].daily_returns.shape[0]),
                "failures": report.failures[name],
                "screen_fallback_days": report.screen_fallbacks.get(name, []),
            }
            for name in names
        },
    }
    with _Emitter(out_dir) as em:
        _write_json(em.path("report.json"), payload)

        dates = report.wealth[names[0]].dates
        with open(em.path("wealth.csv"), "w", encoding="utf-8") as fh:
            fh.write("date," + ",".join(names) + "\n")
            for i, d in enumerate(dates):
                row = [str(d)] + [_fmt(report.wealth[s].wealth[i + 1]) for s in names]
                fh.write(",".join(row) + "\n")

        with open(em.path("allocations.csv"), "w", encoding="utf-8") as fh:
            fh.write("date,strategy," + ",".join(report.tickers) + "\n")
            for name in names:
                series = report.wealth[name]
                for i, d in enumerate(series.dates):
                    row = [str(d), name] + [_fmt(v) for v in series.allocations[i]]
                    fh.write(",".join(row) + "\n")

        if report.gate_log:
            with open(em.path("gates.csv"), "w", encoding="utf-8") as fh:
                mu_cols = ",".join(f"mu_{t}" for t in report.tickers)
                open_cols = ",".join(f"open_{t}" for t in report.tickers)
                fh.write(f"date,strategy,{mu_cols},{open_cols}\n")
                for name, log in report.gate_log.items():
                    for rec in log:
                        row = ([rec["date"], name]
                               + [_fmt(v) for v in rec["mu"]]
                               + [str(int(v)) for v in rec["open"]])
                        fh.write(",".join(row) + "\n")
        return list(em.written)


def cmd_backtest(cfg: RunConfig) -> list:
    """One backtest of every configured strategy; emits the report files."""
    panel = cfg.load_panel()
    report = run_strategies(cfg, panel, base_seed=cfg.train.seed)
    return write_backtest_outputs(report, cfg.out_dir)


# ---------------------------------------------------------------------------
# seed study


def _study_job(cfg: RunConfig, name: str, seed: int) -> dict:
    panel = cfg.load_panel()
    strat = make_strategy(name, cfg.train, base_seed=seed, topk=cfg.topk,
                          screen_lookback=cfg.screen_lookback)
    strat.reset(panel, cfg.schedule)
    series = run_backtest(strat, panel, cfg.schedule, cov_window=cfg.cov_window)
    return perf_stats(series).as_dict()


def cmd_simstudy(cfg: RunConfig) -> list:
    """Runs the network strategies across the configured seeds on one
    simulated (or loaded) panel, aggregates, and tests the two hypotheses:
    that the solver-backed network beats the direct one, and that it beats
    nominal risk parity."""
    if len(cfg.seeds) < 2:
        raise RBNetError("simstudy needs at least 2 seeds in [run] seeds")
    panel = cfg.load_panel()
    e2e_names = [s for s in cfg.strategies if s in E2E_MODES]
    bench_names = [s for s in cfg.strategies if s not in E2E_MODES]

    bench_stats = {}
    for name in bench_names:
        strat = make_strategy(name, cfg.train, topk=cfg.topk,
                              screen_lookback=cfg.screen_lookback)
        strat.reset(panel, cfg.schedule)
        series = run_backtest(strat, panel, cfg.schedule, cov_window=cfg.cov_window)
        bench_stats[name] = _stats_or_error(series)

    jobs = [((name, seed), (cfg, name, seed))
            for seed in cfg.seeds for name in e2e_names]
    results = _run_jobs(_study_job, jobs)
    per_seed = {name: {} for name in e2e_names}
    seed_failures = []
    for (name, seed), row in results.items():
        if "error" in row:
            seed_failures.append({"seed": seed, "strategy": name,
                                  "error": row["error"]})
        else:
            per_seed[name][seed] = row

    aggregates = {}
    for name in e2e_names:
        rows = per_seed[name]
        if not rows:
            continue
        agg = {}
        for metric in next(iter(rows.values())):
            vals = np.array([rows[s][metric] for s in rows])
            agg[metric] = {"mean": _sig10(float(vals.mean())),
                           "stdev": _sig10(float(vals.std(ddof=1)))}
        ranking = sorted(rows, key=lambda s: rows[s][MAIN_METRIC])
        agg["worst_seed"] = ranking[0]
        agg["best_seed"] = ranking[-1]
        agg["median_seed"] = ranking[len(ranking) // 2]
        agg["n_seeds"] = len(rows)
        aggregates[name] = agg

    hypotheses = {"low_power": len(cfg.seeds) < LOW_POWER_SEEDS}
    if "model_based" in per_seed and per_seed["model_based"]:
        based = per_seed["model_based"]
        for metric in (MAIN_METRIC, "sharpe"):
            vals_b = np.array([based[s][metric] for s in based])
            entry = {}
            if "model_free" in per_seed and per_seed["model_free"]:
                free = per_seed["model_free"]
                vals_f = np.array([free[s][metric] for s in free])
                entry["z_free_vs_based"] = _sig10(ztest_two_sample(
                    float(vals_f.mean()), float(vals_f.std(ddof=1)), len(vals_f),
                    float(vals_b.mean()), float(vals_b.std(ddof=1)), len(vals_b)))
            rp = bench_stats.get("nominal_rp", {})
            if metric in rp:
                entry["z_based_vs_rp"] = _sig10(ztest_one_sample(
                    float(vals_b.mean()), float(vals_b.std(ddof=1)), len(vals_b),
                    rp[metric]))
                if metric == "sharpe":
                    beat = int((vals_b > rp[metric]).sum())
                    entry["seeds_beating_rp"] = beat
                    entry["fraction_beating_rp"] = _sig10(beat / len(vals_b))
            if entry:
                hypotheses[metric] = entry

    payload = {
        "version": 1,
        "config": cfg.echo,
        "seeds": list(cfg.seeds),
        "benchmarks": bench_stats,
        "aggregates": aggregates,
        "hypotheses": hypotheses,
        "seed_failures": seed_failures,
    }
    metrics = ["ann_return", "ann_volatility", "sharpe", "mdd", "calmar",
               "return_over_avg_dd"]
    with _Emitter(cfg.out_dir) as em:
        _write_json(em.path("simstudy.json"), payload)
        with open(em.path("seed_metrics.csv"), "w", encoding="utf-8") as fh:
            fh.write("seed,strategy," + ",".join(metrics) + "\n")
            for name in e2e_names:
                for seed in cfg.seeds:
                    row = per_seed[name].get(seed)
                    if row is None:
                        continue
                    fh.write(",".join([str(seed), name]
                                      + [_fmt(row[m]) for m in metrics]) + "\n")
        return list(em.written)


# ---------------------------------------------------------------------------
# hyperparameter grid


def select_grid_cell(cells: list) -> dict:
    """Keeps the cells ranked in the top half of both the train and the
    validation metric, then picks the best validation performer among them.
    Falls back to the overall best validation cell if the intersection is
    empty (flagged by the 'fallback' key)."""
    if not cells:
        raise ValueError("empty grid")
    n = len(cells)
    half = math.ceil(n / 2)
    by_train = sorted(range(n), key=lambda i: -cells[i]["train_metric"])
    by_val = sorted(range(n), key=lambda i: -cells[i]["val_metric"])
    top_train = set(by_train[:half])
    top_val = set(by_val[:half])
    joint = top_train & top_val
    if joint:
        winner = max(joint, key=lambda i: cells[i]["val_metric"])
        return {**cells[winner], "fallback": False}
    winner = by_val[0]
    return {**cells[winner], "fallback": True}


def _span_metric(series: WealthSeries, mask: np.ndarray, objective: str) -> float:
    rets = series.daily_returns[mask]
    if rets.shape[0] < 2:
        raise RBNetError("degenerate grid split: a span has fewer than 2 days")
    if objective == "cum_return":
        return float(np.prod(1.0 + rets))
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + rets)])
    stats = perf_stats(wealth)
    return stats.sharpe


def _grid_job(cfg: RunConfig, mode: str, eta: float, steps: int) -> dict:
    panel = cfg.load_panel()
    sched = replace(cfg.schedule, end=cfg.grid_val_end).resolve(panel.n_days)
    days = np.arange(sched.start, sched.end + 1)
    train_mask = days <= cfg.grid_train_end
    train_cfg = replace(cfg.train, eta=eta, steps=steps, mode=mode)
    strat = EndToEndStrategy(train_cfg, base_seed=cfg.train.seed)
    series = run_backtest(strat, panel, sched, cov_window=cfg.cov_window)
    return {
        "eta": eta,
        "steps": steps,
        "train_metric": _span_metric(series, train_mask, cfg.train.objective),
        "val_metric": _span_metric(series, ~train_mask, cfg.train.objective),
    }


def cmd_gridsearch(cfg: RunConfig) -> list:
    """Backtests the first configured network strategy over each (eta, steps)
    cell, scoring the train and validation date spans separately."""
    if not cfg.grid_etas or not cfg.grid_steps:
        raise RBNetError("gridsearch needs non-empty [grid] eta and steps lists")
    if cfg.grid_train_end is None or cfg.grid_val_end is None:
        raise RBNetError("gridsearch needs [grid] train_end and val_end day indices")
    e2e = [s for s in cfg.strategies if s in E2E_MODES]
    if not e2e:
        raise RBNetError("gridsearch needs a network strategy in [strategies] list")
    mode = e2e[0]
    panel = cfg.load_panel()
    sched = replace(cfg.schedule, end=cfg.grid_val_end).resolve(panel.n_days)
    if not (sched.start < cfg.grid_train_end < cfg.grid_val_end):
        raise RBNetError("grid split must satisfy start < train_end < val_end")

    jobs = [((eta, steps), (cfg, mode, eta, steps))
            for eta in cfg.grid_etas for steps in cfg.grid_steps]
    results = _run_jobs(_grid_job, jobs)
    cells = []
    for (eta, steps) in (key for key, _ in jobs):
        row = results[(eta, steps)]
        if "error" in row:
            raise RBNetError(f"grid cell eta={eta} steps={steps}: {row['error']}")
        cells.append(row)
    selected = select_grid_cell(cells)

    payload = {
        "version": 1,
        "config": cfg.echo,
        "strategy": mode,
        "objective": cfg.train.objective,
        "cells": [{k: (_sig10(v) if isinstance(v, float) else v)
                   for k, v in c.items()} for c in cells],
        "selected": {k: (_sig10(v) if isinstance(v, float) else v)
                     for k, v in selected.items()},
    }
    with _Emitter(cfg.out_dir) as em:
        _write_json(em.path("grid.json"), payload)
        with open(em.path("grid.csv"), "w", encoding="utf-8") as fh:
            fh.write("eta,steps,train_metric,val_metric\n")
            for c in cells:
                fh.write(f"{_fmt(c['eta'])},{c['steps']},{_fmt(c['train_metric'])},"
                         f"{_fmt(c['val_metric'])}\n")
        return list(em.written)
