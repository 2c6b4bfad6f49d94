"""End-to-end allocation networks.

A single-hidden-layer perceptron maps market features either to risk budgets
(model-based, routed through the allocation layer in :mod:`rbnet.risk`) or to
allocations directly (model-free). Gated variants insert trainable stochastic
gates after the budget head so unwanted assets can be filtered out of the
universe. Training maximizes a risk-reward objective of the realized daily
portfolio returns by plain gradient ascent with exact gradients: the solver
layer is differentiated implicitly, everything else by backpropagation.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, risk
from .data import (FEATURE_LOOKBACK, FEATURES_PER_ASSET, ReturnsPanel,
                   feature_matrix)
from .errors import (DegenerateSelectionError, InsufficientHistoryError,
                     SolverConvergenceError, TrainingError)
from .risk import CovMatrix, RiskBudget, Allocation

MODES = ("model_free", "model_based", "gated_filter", "gated_no_filter")
GATED_MODES = ("gated_filter", "gated_no_filter")
OBJECTIVES = ("sharpe", "cum_return")

LEAKY_SLOPE = 0.1
GATE_BUDGET_FLOOR = 1e-6
GATE_MU_INIT = 0.5
LR_DECAY = 0.9
LR_DECAY_EVERY = 3
TRAIN_SOLVER_TOL = 1e-12  # tight so finite differences stay clean


@dataclass
class NetworkParams:
    """Two-layer perceptron weights plus optional gate openness."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mu: np.ndarray | None = None

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, f = self.W1.shape
        n = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (n, h) or self.b2.shape != (n,):
            raise ValueError("inconsistent parameter shapes")
        if f % FEATURES_PER_ASSET != 0 or f // FEATURES_PER_ASSET != n:
            raise ValueError(f"input width {f} does not match {FEATURES_PER_ASSET} features "
                             f"per asset for {n} assets")
        arrays = [self.W1, self.b1, self.W2, self.b2]
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=np.float64)
            if self.mu.shape != (n,):
                raise ValueError("mu must have one entry per asset")
            arrays.append(self.mu)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("parameters must be finite")

    @property
    def n_assets(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.W1.copy(), self.b1.copy(), self.W2.copy(),
                             self.b2.copy(),
                             None if self.mu is None else self.mu.copy())


@dataclass
class TrainConfig:
    """Hyperparameters for one training run / backtest strategy."""

    hidden: int = 32
    eta: float = 150.0
    eta_mu: float = 10.0
    steps: int = 10
    lookback: int = 150
    retrain_every: int = 25
    objective: str = "sharpe"
    mode: str = "model_based"
    gate_sigma: float = 0.1
    seed: int = 0
    warm_start: bool = True
    normalize_features: bool = False
    cov_window: int = 30
    solver_tol: float = TRAIN_SOLVER_TOL

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        for name in ("hidden", "lookback", "retrain_every", "cov_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.steps < 0:  # zero steps = return the initialization
            raise ValueError("steps must be nonnegative")
        if self.gate_sigma < 0:
            raise ValueError("gate_sigma must be nonnegative")

    @property
    def gated(self) -> bool:
        return self.mode in GATED_MODES


@dataclass
class RiskReward:
    """Objective value and its analytic gradient w.r.t. the daily portfolio
    returns it was evaluated on."""

    value: float
    grad: np.ndarray


@dataclass
class NetworkGrads:
    """Gradient of the window objective w.r.t. every parameter."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mu: np.ndarray | None
    objective: float


def leaky_relu(x):
    return np.where(x >= 0.0, x, LEAKY_SLOPE * x)


def _leaky_relu_grad(x):
    return np.where(x >= 0.0, 1.0, LEAKY_SLOPE)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; shifted logits are floored so every output
    stays strictly positive even for extreme parameter values."""
    z = np.atleast_2d(logits)
    z = z - z.max(axis=1, keepdims=True)
    np.clip(z, -600.0, None, out=z)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if logits.ndim == 1 else out


def init_params(n_assets: int, cfg: TrainConfig, rng: np.random.Generator) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights and biases; gate
    openness starts at the neutral 0.5 in gated modes."""
    f = FEATURES_PER_ASSET * n_assets
    a1 = 1.0 / np.sqrt(f)
    a2 = 1.0 / np.sqrt(cfg.hidden)
    W1 = rng.uniform(-a1, a1, size=(cfg.hidden, f))
    b1 = rng.uniform(-a1, a1, size=cfg.hidden)
    W2 = rng.uniform(-a2, a2, size=(n_assets, cfg.hidden))
    b2 = rng.uniform(-a2, a2, size=n_assets)
    mu = np.full(n_assets, GATE_MU_INIT) if cfg.mode in GATED_MODES else None
    return NetworkParams(W1, b1, W2, b2, mu)


def _logits(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != params.W1.shape[1]:
        raise ValueError(f"feature length {x.shape[-1]} does not match network "
                         f"input width {params.W1.shape[1]}")
    hidden = leaky_relu(x @ params.W1.T + params.b1)
    return hidden @ params.W2.T + params.b2


def forward_budget(params: NetworkParams, x) -> RiskBudget:
    """Softmax budget head: b = softmax(W2 lrelu(W1 x + b1) + b2)."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    return RiskBudget(softmax(_logits(params, x)))


def forward_alloc_model_free(params: NetworkParams, x) -> Allocation:
    """Model-free head: the softmax output is the allocation itself."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    z = softmax(_logits(params, x))
    return Allocation(z=z, raw_y=z)


def gate_values(mu: np.ndarray, sigma: float, training: bool,
                seed=None) -> np.ndarray:
    """Gate openness: clamp(mu + eps, 0, 1) during training, hard threshold
    at 0.5 for inference."""
    mu = np.asarray(mu, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if not training:
        return (mu >= 0.5).astype(np.float64)
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, size=mu.shape)
    return np.clip(mu + eps, 0.0, 1.0)


def apply_gates(budget: RiskBudget, gates: np.ndarray, mode: str,
                cov: CovMatrix):
    """Masks the budget by the gate vector and renormalizes.

    with_filter additionally restricts the covariance to the surviving
    assets so the excluded ones receive exactly zero weight; no_filter keeps
    the full universe and floors exactly-zero budgets at GATE_BUDGET_FLOOR
    (the barrier solve needs strictly positive budgets).

    Returns (budget', covariance', active asset indices).
    """
    if mode not in ("with_filter", "no_filter"):
        raise ValueError("mode must be 'with_filter' or 'no_filter'")
    b = budget.b if isinstance(budget, RiskBudget) else np.asarray(budget, dtype=np.float64)
    g = np.asarray(gates, dtype=np.float64)
    if not np.any(g > 0.0):
        raise DegenerateSelectionError("all gates closed: nothing to allocate to")
    n = b.shape[0]
    if np.all(g == 1.0):
        budget = budget if isinstance(budget, RiskBudget) else RiskBudget(b)
        return budget, cov, np.arange(n)
    w = b * g
    total = w.sum()
    if mode == "with_filter":
        active = np.flatnonzero(g > 0.0)
        return RiskBudget(w[active] / total), cov.restrict(active), active
    bp = w / total
    btil = np.where(bp == 0.0, GATE_BUDGET_FLOOR, bp)
    return RiskBudget(btil / btil.sum()), cov, np.arange(n)


def objective_eval(daily_port_returns, kind: str) -> RiskReward:
    """Risk-reward of a return series plus its gradient w.r.t. each return.

    sharpe is the per-period mean over sample standard deviation
    (annualization is a constant factor and is left to reporting);
    cum_return is the compounded growth factor.
    """
    r = np.asarray(daily_port_returns, dtype=np.float64)
    m = r.shape[0]
    if m < 2:
        raise ValueError("need at least two returns")
    if kind == "sharpe":
        mean = r.mean()
        sd = r.std(ddof=1)
        if sd == 0.0:
            raise ValueError("sharpe undefined: zero return volatility")
        grad = 1.0 / (m * sd) - mean * (r - mean) / ((m - 1) * sd**3)
        return RiskReward(float(mean / sd), grad)
    if kind == "cum_return":
        growth = 1.0 + r
        value = float(np.prod(growth))
        return RiskReward(value, value / growth)
    raise ValueError(f"objective must be one of {OBJECTIVES}")


# ---------------------------------------------------------------------------
# Window preparation and the batched forward/backward pass


@dataclass
class _WindowData:
    days: np.ndarray          # day indices inside the window panel
    X: np.ndarray             # (m, F) features, normalized when configured
    rets: np.ndarray          # (m, n) realized asset returns per day
    sigmas_unit: np.ndarray   # (m, n, n) unit-scale conditioned covariances
    y0: np.ndarray            # (m, n) solver starting points


def training_days(window_len: int, cfg: TrainConfig) -> np.ndarray:
    """Days of the window that can be both featured and traded on: the last
    ``lookback`` days, clipped to where the 30-day lookbacks exist."""
    lo = max(FEATURE_LOOKBACK, cfg.cov_window, window_len - cfg.lookback)
    if window_len - lo < 2:
        raise InsufficientHistoryError(
            f"window of {window_len} days leaves fewer than 2 trainable days")
    return np.arange(lo, window_len)


def feature_normalizer(X: np.ndarray):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return mean, sd


def prepare_window(window: ReturnsPanel, cfg: TrainConfig) -> _WindowData:
    days = training_days(window.n_days, cfg)
    X = feature_matrix(window, days)
    if cfg.normalize_features:
        mean, sd = feature_normalizer(X)
        X = (X - mean) / sd
    rets = window.returns[days]
    sigmas = risk.cov_stack(window, days, cfg.cov_window)
    n = sigmas.shape[1]
    scales = np.trace(sigmas, axis1=1, axis2=2) / n
    sigmas_unit = np.ascontiguousarray(sigmas / scales[:, None, None])
    diag = np.sqrt(sigmas_unit[:, np.arange(n), np.arange(n)])
    y0 = np.ascontiguousarray(1.0 / (n * diag))
    return _WindowData(days=days, X=X, rets=rets, sigmas_unit=sigmas_unit, y0=y0)


def _simplex_vjp(points: np.ndarray, grad_out: np.ndarray, total) -> np.ndarray:
    # VJP of p = w / total where total = sum(w): (v - <p, v>) / total.
    return (grad_out - (points * grad_out).sum(axis=1, keepdims=True)) / total


def _window_pass(params: NetworkParams, wd: _WindowData, cfg: TrainConfig,
                 gate_eps: np.ndarray | None, want_grad: bool):
    """One batched forward (and optionally backward) pass over the window.

    Returns (objective value, NetworkGrads or None, solver points or None);
    the solver points are full-width and reusable as the next warm start.
    """
    m, n = wd.rets.shape
    A = wd.X @ params.W1.T + params.b1
    H = leaky_relu(A)
    O = H @ params.W2.T + params.b2
    B = softmax(O)

    gated = cfg.gated and gate_eps is not None
    if gated:
        raw = params.mu + gate_eps
        g = np.clip(raw, 0.0, 1.0)
        if not np.any(g > 0.0):
            raise DegenerateSelectionError("all gates closed during training")
        if np.all(g == 1.0):
            gated = False  # fully open gates reduce to the ungated pass
    if gated:
        W = B * g
        Sw = W.sum(axis=1, keepdims=True)
        Bp = W / Sw
        if cfg.mode == "gated_filter":
            active = np.flatnonzero(g > 0.0)
            Bsolve = np.ascontiguousarray(Bp[:, active])
            sigmas = np.ascontiguousarray(wd.sigmas_unit[np.ix_(np.arange(m), active, active)])
            y0 = np.ascontiguousarray(wd.y0[:, active])
            rets = wd.rets[:, active]
        else:
            active = np.arange(n)
            floored = Bp == 0.0
            Btil = np.where(floored, GATE_BUDGET_FLOOR, Bp)
            Trow = Btil.sum(axis=1, keepdims=True)
            Bsolve = Btil / Trow
            sigmas, y0, rets = wd.sigmas_unit, wd.y0, wd.rets
    else:
        active = np.arange(n)
        Bsolve, sigmas, y0, rets = B, wd.sigmas_unit, wd.y0, wd.rets

    y_full = None
    if cfg.mode == "model_free":
        Z = B
        r = (Z * wd.rets).sum(axis=1)
    else:
        Y, _, _ = _solve_batch(sigmas, Bsolve, y0, cfg.solver_tol)
        Z = Y / Y.sum(axis=1, keepdims=True)
        r = (Z * rets).sum(axis=1)
        if active.shape[0] == n:
            y_full = Y
        else:
            y_full = wd.y0.copy()
            y_full[:, active] = Y

    reward = objective_eval(r, cfg.objective)
    if not want_grad:
        return reward.value, None, y_full

    q = reward.grad  # d objective / d daily return
    if cfg.mode == "model_free":
        dB = q[:, None] * wd.rets
        dmu = None
    else:
        dZ = q[:, None] * rets
        dBsolve = risk.budget_vjp_batch(sigmas, Bsolve, Y, dZ)
        if gated:
            if cfg.mode == "gated_filter":
                dBp = np.zeros((m, n))
                dBp[:, active] = dBsolve
            else:
                dBtil = _simplex_vjp(Bsolve, dBsolve, Trow)
                dBp = np.where(floored, 0.0, dBtil)
            dW = _simplex_vjp(Bp, dBp, Sw)
            dB = dW * g
            dmu_days = dW * B
            interior = (raw > 0.0) & (raw < 1.0)
            dmu = np.where(interior, dmu_days.sum(axis=0), 0.0)
        else:
            dB = dBsolve
            dmu = np.zeros(n) if cfg.gated else None

    dO = B * (dB - (B * dB).sum(axis=1, keepdims=True))
    dW2 = dO.T @ H
    db2 = dO.sum(axis=0)
    dH = dO @ params.W2
    dA = dH * _leaky_relu_grad(A)
    dW1 = dA.T @ wd.X
    db1 = dA.sum(axis=0)
    if cfg.gated and dmu is None:
        dmu = np.zeros(n)
    grads = NetworkGrads(W1=dW1, b1=db1, W2=dW2, b2=db2, mu=dmu,
                         objective=reward.value)
    return reward.value, grads, y_full


def _solve_batch(sigmas_unit, budgets, y0, tol):
    Y, iters, resid = _kernels.newton_solve_batch(
        np.ascontiguousarray(sigmas_unit), np.ascontiguousarray(budgets),
        np.ascontiguousarray(y0), tol, risk.MAX_NEWTON_ITER)
    if np.any(iters < 0):
        k = int(np.flatnonzero(iters < 0)[0])
        raise SolverConvergenceError(
            f"risk-budget solve stalled on window day {k} "
            f"(residual {resid[k]:.3e})", residual=float(resid[k]),
            iterations=risk.MAX_NEWTON_ITER)
    return Y, iters, resid


def window_objective(params: NetworkParams, window: ReturnsPanel,
                     cfg: TrainConfig, gate_eps=None) -> float:
    """Objective value over the window for fixed gate noise (no gradient)."""
    wd = prepare_window(window, cfg)
    eps = None if gate_eps is None else np.asarray(gate_eps, dtype=np.float64)
    value, _, _ = _window_pass(params, wd, cfg, eps, want_grad=False)
    return value


def full_gradient(params: NetworkParams, window: ReturnsPanel,
                  cfg: TrainConfig, gate_eps=None) -> NetworkGrads:
    """Exact gradient of the window objective w.r.t. every parameter.

    Composes the objective gradient, the normalization and implicit solver
    Jacobians, the gate and softmax Jacobians, and perceptron
    backpropagation; model_free skips the solver chain.
    """
    wd = prepare_window(window, cfg)
    eps = None if gate_eps is None else np.asarray(gate_eps, dtype=np.float64)
    _, grads, _ = _window_pass(params, wd, cfg, eps, want_grad=True)
    return grads


def learning_rate(base: float, step: int) -> float:
    """Step sizes decay by 0.9 every three steps (0-based step index)."""
    return base * LR_DECAY ** (step // LR_DECAY_EVERY)


def train(window: ReturnsPanel, cfg: TrainConfig,
          init: NetworkParams | None = None,
          seed=None) -> NetworkParams:
    """Gradient-ascent training of the window objective.

    Deterministic given (config, seed): parameter initialization and the
    per-step gate noise come from one seeded generator. ``init`` warm-starts
    from previously trained parameters.
    """
    if seed is None:
        seed = cfg.seed
    rng = np.random.default_rng(seed)
    wd = prepare_window(window, cfg)
    n = wd.rets.shape[1]
    params = init.copy() if init is not None else init_params(n, cfg, rng)
    if cfg.gated and params.mu is None:
        params = replace(params, mu=np.full(n, GATE_MU_INIT))
    for step in range(cfg.steps):
        eps = rng.normal(0.0, cfg.gate_sigma, size=n) if cfg.gated else None
        try:
            value, grads, y_warm = _window_pass(params, wd, cfg, eps,
                                                want_grad=True)
        except (DegenerateSelectionError, SolverConvergenceError) as exc:
            raise TrainingError(f"step {step}: {exc}", step=step) from exc
        if y_warm is not None:
            wd.y0 = y_warm
        if not np.isfinite(value):
            raise TrainingError(f"step {step}: objective became non-finite",
                                step=step)
        lr = learning_rate(cfg.eta, step)
        params.W1 += lr * grads.W1
        params.b1 += lr * grads.b1
        params.W2 += lr * grads.W2
        params.b2 += lr * grads.b2
        if cfg.gated:
            params.mu += learning_rate(cfg.eta_mu, step) * grads.mu
    return params


def save_params(params: NetworkParams, path) -> None:
    """Lossless checkpoint: versioned list of named float64 arrays."""
    arrays = {"W1": params.W1, "b1": params.b1, "W2": params.W2, "b2": params.b2}
    if params.mu is not None:
        arrays["mu"] = params.mu
    np.savez(path, version=np.int64(1), **arrays)


def load_params(path) -> NetworkParams:
    with np.load(path) as data:
        if int(data["version"]) != 1:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        return NetworkParams(data["W1"], data["b1"], data["W2"], data["b2"],
                             data["mu"] if "mu" in data.files else None)
