"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. On runtime
failure any files written by the failed command are removed.
"""

import json
import sys
from dataclasses import replace as dc_replace

import click

from .config import load_config
from .errors import ConfigError
from .reporting import cmd_backtest, cmd_gridsearch, cmd_simstudy

_STAT_COLUMNS = [("ann_return", "Return"), ("ann_volatility", "Volatility"),
                 ("sharpe", "Sharpe"), ("mdd", "MDD"), ("calmar", "Calmar"),
                 ("return_over_avg_dd", "Ret/AveDD")]

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _load(config_path, seed, out, strategies, seed_target):
    try:
        cfg = load_config(config_path)
        if out is not None:
            cfg.out_dir = out
        if strategies is not None:
            names = [s.strip() for s in strategies.split(",") if s.strip()]
            if not names:
                raise ConfigError("--strategies must name at least one strategy")
            from .strategies import STRATEGY_NAMES
            for name in names:
                if name not in STRATEGY_NAMES:
                    raise ConfigError(f"unknown strategy {name!r}")
            cfg.strategies = names
        if seed is not None:
            if seed_target == "train":
                cfg.train = dc_replace(cfg.train, seed=seed)
            else:
                if cfg.sim_spec is not None:
                    cfg.sim_spec = dc_replace(cfg.sim_spec, seed=seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    return cfg


def _run(fn, cfg):
    # Writers remove their own partial outputs on failure.
    try:
        written = fn(cfg)
    except Exception as exc:  # runtime failure of any kind -> exit 1
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    for path in written:
        click.echo(f"wrote {path}")
    return written


def _print_stats_table(report_path):
    """Rounded 4-decimal summary of the per-strategy statistics."""
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    width = max(len(n) for n in report["strategies"]) + 2
    click.echo(f"{'strategy':<{width}}"
               + "".join(f"{label:>12}" for _, label in _STAT_COLUMNS))
    for name, row in report["strategies"].items():
        cells = []
        for key, _ in _STAT_COLUMNS:
            value = row["stats"].get(key)
            cells.append(f"{value:>12.4f}" if isinstance(value, (int, float))
                         else f"{'--':>12}")
        click.echo(f"{name:<{width}}" + "".join(cells))


_config_opt = click.option("--config", "config_path", required=True,
                           type=click.Path(), help="Run configuration file.")
_out_opt = click.option("--out", default=None, type=click.Path(),
                        help="Output directory (overrides [run] out).")
_strategies_opt = click.option("--strategies", default=None,
                               help="Comma-separated strategy list override.")


@click.group()
def main():
    """Risk-budgeting portfolio experiments: backtests, seed studies, and
    hyperparameter grids."""


@main.command()
@_config_opt
@click.option("--seed", type=int, default=None,
              help="Overrides the [train] seed.")
@_out_opt
@_strategies_opt
def backtest(config_path, seed, out, strategies):
    """Backtests every configured strategy and writes report.json,
    wealth.csv, allocations.csv and (for gated strategies) gates.csv."""
    cfg = _load(config_path, seed, out, strategies, seed_target="train")
    written = _run(cmd_backtest, cfg)
    _print_stats_table(written[0])


@main.command()
@_config_opt
@click.option("--seed", type=int, default=None,
              help="Overrides the [data] sim_seed.")
@_out_opt
@_strategies_opt
def simstudy(config_path, seed, out, strategies):
    """Runs the network strategies over the [run] seeds list, aggregates
    across seeds, and reports the hypothesis-test Z statistics."""
    cfg = _load(config_path, seed, out, strategies, seed_target="data")
    _run(cmd_simstudy, cfg)


@main.command()
@_config_opt
@click.option("--seed", type=int, default=None,
              help="Overrides the [train] seed.")
@_out_opt
@_strategies_opt
def gridsearch(config_path, seed, out, strategies):
    """Scores every (eta, steps) grid cell on the train/validation split and
    applies the top-half-of-both selection rule."""
    cfg = _load(config_path, seed, out, strategies, seed_target="train")
    _run(cmd_gridsearch, cfg)


if __name__ == "__main__":
    main()
