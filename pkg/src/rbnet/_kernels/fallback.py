"""Pure-numpy implementations of the solver kernels.

Same contracts as the compiled module: a damped Newton solve of
    min_y  0.5 y'Sy - sum_i b_i ln(y_i),   y > 0
and batched SPD solves against S + diag(b / y^2). The batch variant is
vectorized across instances; rows that have converged are frozen while the
rest keep iterating.
"""

import numpy as np


def _batch_objective(sigmas, budgets, Y):
    SY = np.einsum("kij,kj->ki", sigmas, Y)
    obj = 0.5 * np.einsum("ki,ki->k", Y, SY)
    obj -= np.einsum("ki,ki->k", budgets, np.log(Y))
    return obj, SY


def newton_solve_batch(sigmas, budgets, y0, tol, max_iter):
    """Damped Newton on a stack of (S, b) instances.

    Returns (Y, iters, resid); iters[k] < 0 flags non-convergence.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    budgets = np.asarray(budgets, dtype=np.float64)
    Y = np.array(y0, dtype=np.float64, copy=True)
    m, n = Y.shape
    iters = np.full(m, -1, dtype=np.int32)
    resid = np.full(m, np.inf, dtype=np.float64)
    obj, SY = _batch_objective(sigmas, budgets, Y)

    eye = np.arange(n)
    for it in range(max_iter + 1):
        act = iters < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            G = SY[act] - budgets[act] / Y[act]
        r = np.abs(G).max(axis=1)
        resid[act] = r
        conv = r <= tol
        if conv.any():
            idx = np.flatnonzero(act)[conv]
            iters[idx] = it
            act = iters < 0
            if not act.any() or it == max_iter:
                break
            G = G[~conv]
        elif it == max_iter:
            break

        Ya, Ba, Sa = Y[act], budgets[act], sigmas[act]
        H = Sa.copy()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            H[:, eye, eye] += Ba / Ya**2
        try:
            D = np.linalg.solve(H, -G[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break  # hopeless instances stay flagged as non-converged

        # fraction to boundary, then per-row objective backtracking
        with np.errstate(divide="ignore"):
            amax = np.where(D < 0.0, -0.995 * Ya / np.where(D < 0.0, D, -1.0), np.inf)
        alpha = np.minimum(1.0, amax.min(axis=1))
        # tolerate objective changes below float resolution, otherwise the
        # final quadratic-convergence steps get rejected
        f0 = obj[act]
        accept = f0 + 1e-12 * (np.abs(f0) + 1.0)
        for _ in range(61):
            Yt = Ya + alpha[:, None] * D
            with np.errstate(invalid="ignore", divide="ignore"):
                ft, SYt = _batch_objective(Sa, Ba, Yt)
            bad = ~np.isfinite(ft) | (ft > accept)
            if not bad.any():
                break
            alpha[bad] *= 0.5
        Y[act] = Yt
        obj[act], SY[act] = ft, SYt
    return Y, iters, resid


def newton_solve(sigma, b, y0, tol, max_iter):
    """Single-instance variant of :func:`newton_solve_batch`."""
    Y, iters, resid = newton_solve_batch(
        np.asarray(sigma, dtype=np.float64)[None],
        np.asarray(b, dtype=np.float64)[None],
        np.asarray(y0, dtype=np.float64)[None],
        tol, max_iter)
    return Y[0], int(iters[0]), float(resid[0])


def kkt_solve_batch(sigmas, budgets, Y, rhs):
    """Solves (S_k + diag(b_k / y_k^2)) X_k = rhs_k for each instance."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    budgets = np.asarray(budgets, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = sigmas.shape[1]
    M = sigmas.copy()
    idx = np.arange(n)
    M[:, idx, idx] += budgets / Y**2
    return np.linalg.solve(M, np.asarray(rhs, dtype=np.float64))
