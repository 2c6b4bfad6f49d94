"""Default seven-asset simulation calibration.

Daily means and annualized volatilities come from the 2011-2021 statistics
of the seven-ETF universe (total stock market, small cap, aggregate bond,
corporate bond, muni bond, commodity, gold); the correlation structure is a
fixed plausible estimate for the same period. Verified positive definite by
the test suite. Pass an explicit SimSpec to use different markets.
"""

import numpy as np

from .data import SimSpec

ETF7_TICKERS = ["VTI", "IWM", "AGG", "LQD", "MUB", "DBC", "GLD"]

ETF7_DAILY_MEAN = np.array(
    [0.00059, 0.00013, -0.00011, 0.00022, 0.00056, 0.00017, 0.00017])

_ANNUAL_VOL = np.array([0.1759, 0.2194, 0.0401, 0.0724, 0.0514, 0.1611, 0.1584])

_CORR = np.array([
    # VTI    IWM    AGG    LQD    MUB    DBC    GLD
    [1.00,  0.90, -0.10,  0.25,  0.05,  0.45,  0.05],   # VTI
    [0.90,  1.00, -0.12,  0.20,  0.03,  0.42,  0.05],   # IWM
    [-0.10, -0.12, 1.00,  0.80,  0.60, -0.10,  0.25],   # AGG
    [0.25,  0.20,  0.80,  1.00,  0.55,  0.05,  0.25],   # LQD
    [0.05,  0.03,  0.60,  0.55,  1.00, -0.05,  0.15],   # MUB
    [0.45,  0.42, -0.10,  0.05, -0.05,  1.00,  0.40],   # DBC
    [0.05,  0.05,  0.25,  0.25,  0.15,  0.40,  1.00],   # GLD
])


def etf7_daily_cov() -> np.ndarray:
    vol = _ANNUAL_VOL / np.sqrt(252.0)
    return _CORR * np.outer(vol, vol)


def default_sim_spec(horizon: int = 325, seed: int = 0) -> SimSpec:
    return SimSpec(mean=ETF7_DAILY_MEAN.copy(), cov=etf7_daily_cov(),
                   horizon=horizon, seed=seed, tickers=list(ETF7_TICKERS))
