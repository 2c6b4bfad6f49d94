"""Covariance estimation, risk accounting, and the risk-budget allocation layer.

The allocation layer solves the strictly convex barrier problem

    min_y  0.5 y' S y  -  sum_i b_i ln(y_i),    y > 0,

whose stationarity condition  S y = b / y  makes asset i's risk contribution
equal b_i after normalizing z = y / ||y||_1. A damped Newton method (compiled
kernel or numpy fallback) solves it; the same stationarity condition is
differentiated implicitly to get d y*/d b, so the layer is usable inside a
network trained by backpropagation.

The solve runs on a unit-scale conditioned matrix (S divided by its mean
diagonal), which keeps the tolerances meaningful across daily-variance
magnitudes and makes the result invariant to rescaling S up to solver
tolerance.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import ReturnsPanel
from .errors import (InsufficientHistoryError, SingularSystemError,
                     SolverConvergenceError)

RIDGE_EPS = 1e-8  # daily-variance units
STATIONARITY_TOL = 1e-10  # infinity norm, on the conditioned system
MAX_NEWTON_ITER = 200


@dataclass
class CovMatrix:
    """Symmetric positive-definite covariance of daily returns."""

    sigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        n = self.sigma.shape[0]
        if self.sigma.shape != (n, n):
            raise ValueError("covariance must be square")
        scale = max(1.0, np.abs(self.sigma).max())
        if np.abs(self.sigma - self.sigma.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric within 1e-12")
        if np.linalg.eigvalsh(self.sigma)[0] <= 0.0:
            raise ValueError("covariance must be positive definite")

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    def restrict(self, idx) -> "CovMatrix":
        """Principal sub-block for the given asset indices."""
        idx = np.asarray(idx, dtype=int)
        return CovMatrix(self.sigma[np.ix_(idx, idx)])


@dataclass
class RiskBudget:
    """Strictly positive budget vector summing to one."""

    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.ndim != 1:
            raise ValueError("budget must be a vector")
        if np.any(self.b <= 0.0):
            raise ValueError("budget entries must be strictly positive")
        if abs(self.b.sum() - 1.0) > 1e-10:
            raise ValueError("budget must sum to 1 within 1e-10")


@dataclass
class Allocation:
    """Long-only weights z (sum 1) plus the unnormalized solver output."""

    z: np.ndarray
    raw_y: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.raw_y = np.asarray(self.raw_y, dtype=np.float64)
        if self.z.shape != self.raw_y.shape or self.z.ndim != 1:
            raise ValueError("z and raw_y must be vectors of equal length")
        if np.any(self.z < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(self.z.sum() - 1.0) > 1e-10:
            raise ValueError("weights must sum to 1 within 1e-10")
        norm = np.abs(self.raw_y).sum()
        if norm <= 0.0 or np.abs(self.raw_y / norm - self.z).max() > 1e-10:
            raise ValueError("z must equal raw_y / ||raw_y||_1")


@dataclass
class RBJacobians:
    """Derivatives of the allocation layer at an interior solution.

    dy_db: d y*/d b from implicit differentiation of the stationarity
    condition; dz_dy: exact Jacobian of the normalization y -> y/||y||_1.
    """

    dy_db: np.ndarray
    dz_dy: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.dy_db)) and np.all(np.isfinite(self.dz_dy))):
            raise ValueError("jacobians must be finite")


def sample_covariance(panel: ReturnsPanel, t: int, window: int = 30) -> CovMatrix:
    """Unbiased sample covariance of the ``window`` days before day ``t``.

    A ridge of RIDGE_EPS * I is added when the smallest eigenvalue falls
    below RIDGE_EPS, so the result is always usable by the solver.
    """
    if t < window:
        raise InsufficientHistoryError(
            f"day {t} needs {window} prior days for covariance estimation")
    block = panel.returns[t - window:t]
    return CovMatrix(_conditioned_cov(block))


def _conditioned_cov(block: np.ndarray) -> np.ndarray:
    w, n = block.shape
    centered = block - block.mean(axis=0)
    sigma = centered.T @ centered / (w - 1)
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.eigvalsh(sigma)[0] < RIDGE_EPS:
        sigma = sigma + RIDGE_EPS * np.eye(n)
    return sigma


def cov_stack(panel: ReturnsPanel, days, window: int = 30) -> np.ndarray:
    """Conditioned sample covariances for several days, stacked (m, n, n)."""
    days = np.asarray(days, dtype=int)
    if days.size and days.min() < window:
        raise InsufficientHistoryError(
            f"day {days.min()} needs {window} prior days for covariance estimation")
    return np.array([_conditioned_cov(panel.returns[t - window:t]) for t in days])


def risk_contributions(alloc: Allocation, cov: CovMatrix) -> np.ndarray:
    """Each asset's share of portfolio variance; entries sum to 1."""
    z = alloc.z if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=np.float64)
    sz = cov.sigma @ z
    total = z @ sz
    if total <= 0.0:
        raise ValueError("portfolio variance must be positive")
    return z * sz / total


def _initial_point(sigma_unit: np.ndarray) -> np.ndarray:
    vols = np.sqrt(np.diag(sigma_unit))
    return 1.0 / (len(vols) * vols)


def solve_risk_budget(cov: CovMatrix, budget: RiskBudget,
                      tol: float = STATIONARITY_TOL,
                      max_iter: int = MAX_NEWTON_ITER) -> Allocation:
    """Allocation whose risk contributions match the requested budget."""
    b = budget.b if isinstance(budget, RiskBudget) else np.asarray(budget, dtype=np.float64)
    sigma = cov.sigma
    scale = float(np.trace(sigma)) / cov.n
    sigma_unit = np.ascontiguousarray(sigma / scale)
    y0 = _initial_point(sigma_unit)
    y, status, resid = _kernels.newton_solve(sigma_unit, np.ascontiguousarray(b),
                                             y0, tol, max_iter)
    if status < 0:
        raise SolverConvergenceError(
            f"risk-budget solve stalled after {max_iter} iterations "
            f"(residual {resid:.3e})", residual=float(resid), iterations=max_iter)
    raw_y = y / np.sqrt(scale)
    return Allocation(z=raw_y / raw_y.sum(), raw_y=raw_y)


def solve_risk_budget_batch(sigmas: np.ndarray, budgets: np.ndarray,
                            tol: float = STATIONARITY_TOL,
                            max_iter: int = MAX_NEWTON_ITER):
    """Batched solve on raw arrays; returns (Y, Z, scales).

    Y is in the conditioned coordinates (one scale per instance); Z rows are
    the normalized allocations. Used by the training loop.
    """
    m, n = budgets.shape
    scales = np.trace(sigmas, axis1=1, axis2=2) / n
    sigmas_unit = np.ascontiguousarray(sigmas / scales[:, None, None])
    diag = np.sqrt(sigmas_unit[:, np.arange(n), np.arange(n)])
    y0 = np.ascontiguousarray(1.0 / (n * diag))
    Y, iters, resid = _kernels.newton_solve_batch(
        sigmas_unit, np.ascontiguousarray(budgets), y0, tol, max_iter)
    if np.any(iters < 0):
        k = int(np.flatnonzero(iters < 0)[0])
        raise SolverConvergenceError(
            f"risk-budget solve stalled on instance {k} "
            f"(residual {resid[k]:.3e})", residual=float(resid[k]),
            iterations=max_iter)
    Z = Y / Y.sum(axis=1, keepdims=True)
    return Y, Z, scales


def rb_jacobian(cov: CovMatrix, budget: RiskBudget, raw_y: np.ndarray) -> RBJacobians:
    """Implicit derivative of the solve plus the normalization Jacobian.

    Differentiating S y - b/y = 0 at an interior solution gives
        (S + diag(b / y^2)) dy_db = diag(1 / y).
    """
    b = budget.b if isinstance(budget, RiskBudget) else np.asarray(budget, dtype=np.float64)
    y = np.asarray(raw_y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise ValueError("raw_y must be a strictly positive interior solution")
    n = y.shape[0]
    rhs = np.zeros((1, n, n))
    rhs[0, np.arange(n), np.arange(n)] = 1.0 / y
    try:
        dy_db = _kernels.kkt_solve_batch(
            np.ascontiguousarray(cov.sigma[None]),
            np.ascontiguousarray(b[None]),
            np.ascontiguousarray(y[None]), rhs)[0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"stationarity system is singular: {exc}") from exc
    s = y.sum()
    dz_dy = (np.eye(n) - np.outer(y / s, np.ones(n))) / s
    return RBJacobians(dy_db=dy_db, dz_dy=dz_dy)


def budget_vjp_batch(sigmas_unit: np.ndarray, budgets: np.ndarray,
                     Y: np.ndarray, grad_z: np.ndarray) -> np.ndarray:
    """Backpropagates d(objective)/dz through the allocation layer.

    All arrays are batched over instances and in the conditioned coordinates
    returned by solve_risk_budget_batch (the normalized allocation and its
    budget gradient are scale-free, so conditioning does not change the
    result). Returns d(objective)/db with shape (m, n).
    """
    S = Y.sum(axis=1, keepdims=True)
    Z = Y / S
    grad_y = (grad_z - (Z * grad_z).sum(axis=1, keepdims=True)) / S
    try:
        t = _kernels.kkt_solve_batch(sigmas_unit, budgets,
                                     np.ascontiguousarray(Y),
                                     np.ascontiguousarray(grad_y[:, :, None]))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"stationarity system is singular: {exc}") from exc
    return t[:, :, 0] / Y
