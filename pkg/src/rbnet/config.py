"""Run configuration: a flat INI file with one section per concern.

Sections and keys (all optional unless noted):

    [data]        source = sim | csv (required)
                  path = returns.csv            (csv source)
                  horizon, sim_seed, preset     (sim source; preset: etf7)
                  mean = c1,c2,...              (overrides preset means)
                  cov_csv = matrix.csv          (overrides preset covariance)
                  adversarial = true/false, adv_mu, adv_sigma, adv_seed
    [strategies]  list = model_based, nominal_rp, ... (required)
                  topk, screen_lookback
    [train]       hidden, eta, eta_mu, steps, objective, gate_sigma, seed,
                  warm_start, normalize_features
    [schedule]    lookback, retrain_every, start, end
    [run]         out, seeds = s1,s2,..., cov_window
    [grid]        eta = e1,e2,..., steps = n1,n2,..., train_end, val_end

No nesting, no includes; values echo verbatim into reports. Relative
[data] path / cov_csv entries resolve against the config file's directory.
"""

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .backtest import BacktestSchedule
from .calibration import default_sim_spec
from .data import ReturnsPanel, SimSpec, append_random_asset, load_returns, simulate_returns
from .errors import ConfigError
from .nets import TrainConfig
from .strategies import STRATEGY_NAMES


@dataclass
class RunConfig:
    source: str
    strategies: list
    train: TrainConfig
    schedule: BacktestSchedule
    out_dir: str = "out"
    csv_path: str | None = None
    sim_spec: SimSpec | None = None
    adversarial: bool = False
    adv_mu: float = -0.0005
    adv_sigma: float = 0.0005
    adv_seed: int = 99
    seeds: list = field(default_factory=list)
    topk: int = 4
    screen_lookback: int = 30
    cov_window: int = 30
    grid_etas: list = field(default_factory=list)
    grid_steps: list = field(default_factory=list)
    grid_train_end: int | None = None
    grid_val_end: int | None = None
    echo: dict = field(default_factory=dict)

    def load_panel(self) -> ReturnsPanel:
        if self.source == "csv":
            panel = load_returns(self.csv_path)
        else:
            panel = simulate_returns(self.sim_spec)
        if self.adversarial:
            panel = append_random_asset(panel, self.adv_mu, self.adv_sigma,
                                        self.adv_seed)
        return panel


def _get(cp, section, key, default=None):
    if cp.has_option(section, key):
        return cp.get(section, key).strip()
    return default


def _get_int(cp, section, key, default=None):
    raw = _get(cp, section, key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None


def _get_float(cp, section, key, default=None):
    raw = _get(cp, section, key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from None


def _get_bool(cp, section, key, default=False):
    raw = _get(cp, section, key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")


def _get_list(cp, section, key, conv=str, default=()):
    raw = _get(cp, section, key)
    if raw is None:
        return list(default)
    items = [s.strip() for s in raw.split(",") if s.strip()]
    try:
        return [conv(s) for s in items]
    except ValueError:
        raise ConfigError(f"[{section}] {key} has a malformed list: {raw!r}") from None


def load_config(path) -> RunConfig:
    """Parses and validates; raises ConfigError on any problem (including a
    missing referenced data file, checked here so no run ever starts)."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    source = _get(cp, "data", "source")
    if source not in ("sim", "csv"):
        raise ConfigError("[data] source must be 'sim' or 'csv'")
    csv_path = None
    sim_spec = None
    if source == "csv":
        csv_path = _get(cp, "data", "path")
        if not csv_path:
            raise ConfigError("[data] path is required for csv source")
        if not os.path.isabs(csv_path):
            csv_path = os.path.join(os.path.dirname(os.path.abspath(path)), csv_path)
        if not os.path.exists(csv_path):
            raise ConfigError(f"[data] path does not exist: {csv_path}")
    else:
        preset = _get(cp, "data", "preset", "etf7")
        if preset != "etf7":
            raise ConfigError(f"[data] unknown preset {preset!r}")
        horizon = _get_int(cp, "data", "horizon", 325)
        sim_seed = _get_int(cp, "data", "sim_seed", 0)
        sim_spec = default_sim_spec(horizon=horizon, seed=sim_seed)
        mean = _get_list(cp, "data", "mean", float)
        cov_csv = _get(cp, "data", "cov_csv")
        if mean or cov_csv:
            cov = sim_spec.cov
            if cov_csv:
                if not os.path.isabs(cov_csv):
                    cov_csv = os.path.join(os.path.dirname(os.path.abspath(path)), cov_csv)
                if not os.path.exists(cov_csv):
                    raise ConfigError(f"[data] cov_csv does not exist: {cov_csv}")
                cov = np.loadtxt(cov_csv, delimiter=",")
            m = np.asarray(mean) if mean else sim_spec.mean
            if m.shape[0] != cov.shape[0]:
                raise ConfigError("[data] mean length does not match covariance size")
            tickers = [f"A{i}" for i in range(m.shape[0])] if m.shape[0] != 7 \
                else sim_spec.tickers
            sim_spec = SimSpec(mean=m, cov=cov, horizon=horizon, seed=sim_seed,
                               tickers=tickers)

    strategies = _get_list(cp, "strategies", "list")
    if not strategies:
        raise ConfigError("[strategies] list must name at least one strategy")
    for name in strategies:
        if name not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
    if len(set(strategies)) != len(strategies):
        raise ConfigError("[strategies] list contains duplicates")

    cov_window = _get_int(cp, "run", "cov_window", 30)
    try:
        train = TrainConfig(
            hidden=_get_int(cp, "train", "hidden", 32),
            eta=_get_float(cp, "train", "eta", 150.0),
            eta_mu=_get_float(cp, "train", "eta_mu", 10.0),
            steps=_get_int(cp, "train", "steps", 10),
            lookback=_get_int(cp, "schedule", "lookback", 150),
            retrain_every=_get_int(cp, "schedule", "retrain_every", 25),
            objective=_get(cp, "train", "objective", "sharpe"),
            gate_sigma=_get_float(cp, "train", "gate_sigma", 0.1),
            seed=_get_int(cp, "train", "seed", 0),
            warm_start=_get_bool(cp, "train", "warm_start", True),
            normalize_features=_get_bool(cp, "train", "normalize_features", False),
            cov_window=cov_window,
        )
        schedule = BacktestSchedule(
            lookback=train.lookback,
            retrain_every=train.retrain_every,
            start=_get_int(cp, "schedule", "start"),
            end=_get_int(cp, "schedule", "end"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    echo = {s: dict(cp.items(s)) for s in cp.sections()}
    return RunConfig(
        source=source,
        strategies=strategies,
        train=train,
        schedule=schedule,
        out_dir=_get(cp, "run", "out", "out"),
        csv_path=csv_path,
        sim_spec=sim_spec,
        adversarial=_get_bool(cp, "data", "adversarial", False),
        adv_mu=_get_float(cp, "data", "adv_mu", -0.0005),
        adv_sigma=_get_float(cp, "data", "adv_sigma", 0.0005),
        adv_seed=_get_int(cp, "data", "adv_seed", 99),
        seeds=_get_list(cp, "run", "seeds", int),
        topk=_get_int(cp, "strategies", "topk", 4),
        screen_lookback=_get_int(cp, "strategies", "screen_lookback", 30),
        cov_window=cov_window,
        grid_etas=_get_list(cp, "grid", "eta", float),
        grid_steps=_get_list(cp, "grid", "steps", int),
        grid_train_end=_get_int(cp, "grid", "train_end"),
        grid_val_end=_get_int(cp, "grid", "val_end"),
        echo=echo,
    )
