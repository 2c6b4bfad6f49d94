# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical core.

Hot kernels for the risk-budget allocation layer: a damped Newton solve of
    min_y  0.5 y' S y - sum_i b_i ln(y_i),   y > 0
and symmetric-positive-definite linear solves against the stationarity
Hessian S + diag(b / y^2), batched over many (S, b) instances so the
training loop never crosses the Python boundary per day.
"""

import numpy as np

from libc.math cimport fabs, isfinite, log, sqrt


cdef int _cholesky(double* a, int n) noexcept nogil:
    # In-place lower-triangular Cholesky of a row-major n x n matrix.
    # Returns 0 on success, -1 if the matrix is not positive definite.
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = a[j * n + j]
        for k in range(j):
            s -= a[j * n + k] * a[j * n + k]
        if s <= 0.0 or not isfinite(s):
            return -1
        a[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i * n + j]
            for k in range(j):
                s -= a[i * n + k] * a[j * n + k]
            a[i * n + j] = s / a[j * n + j]
    return 0


cdef void _chol_solve_vec(double* L, double* x, int n) noexcept nogil:
    # Solves (L L') x = rhs in place; x holds rhs on entry, solution on exit.
    cdef int i, k
    cdef double s
    for i in range(n):
        s = x[i]
        for k in range(i):
            s -= L[i * n + k] * x[k]
        x[i] = s / L[i * n + i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * x[k]
        x[i] = s / L[i * n + i]


cdef double _barrier_objective(double* sigma, double* b, double* y,
                               double* sy, int n) noexcept nogil:
    # 0.5 y'Sy - sum b ln y; also writes Sy into sy.
    cdef int i, j
    cdef double quad = 0.0, barrier = 0.0, s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += sigma[i * n + j] * y[j]
        sy[i] = s
        quad += y[i] * s
        barrier += b[i] * log(y[i])
    return 0.5 * quad - barrier


cdef int _newton_one(double* sigma, double* b, double* y, int n,
                     double tol, int max_iter,
                     double* grad, double* hess, double* sy, double* ytrial,
                     double* resid_out) noexcept nogil:
    # Damped Newton with a fraction-to-boundary rule and objective
    # backtracking. y holds the start point on entry, the final iterate on
    # exit. Returns the iteration count on convergence, -1 if max_iter was
    # exhausted, -2 on a Hessian factorization failure.
    cdef int it, i, j, ls
    cdef double resid, alpha, amax, f0, f1, d
    f0 = _barrier_objective(sigma, b, y, sy, n)
    for it in range(max_iter + 1):
        resid = 0.0
        for i in range(n):
            grad[i] = sy[i] - b[i] / y[i]
            d = fabs(grad[i])
            if d > resid:
                resid = d
        resid_out[0] = resid
        if resid <= tol:
            return it
        if it == max_iter:
            return -1
        for i in range(n):
            for j in range(n):
                hess[i * n + j] = sigma[i * n + j]
            hess[i * n + i] += b[i] / (y[i] * y[i])
        if _cholesky(hess, n) != 0:
            return -2
        for i in range(n):
            ytrial[i] = -grad[i]
        _chol_solve_vec(hess, ytrial, n)  # ytrial <- Newton direction
        alpha = 1.0
        for i in range(n):
            if ytrial[i] < 0.0:
                amax = -0.995 * y[i] / ytrial[i]
                if amax < alpha:
                    alpha = amax
        # The accept test tolerates objective changes below float resolution,
        # otherwise the final quadratic-convergence steps get rejected.
        for ls in range(60):
            for i in range(n):
                grad[i] = y[i] + alpha * ytrial[i]  # grad reused as trial point
            f1 = _barrier_objective(sigma, b, grad, sy, n)
            if isfinite(f1) and f1 <= f0 + 1e-12 * (fabs(f0) + 1.0):
                break
            alpha *= 0.5
        for i in range(n):
            y[i] = y[i] + alpha * ytrial[i]
        f0 = _barrier_objective(sigma, b, y, sy, n)
    return -1


def newton_solve_batch(double[:, :, ::1] sigmas, double[:, ::1] budgets,
                       double[:, ::1] y0, double tol, int max_iter):
    """Solves the barrier problem for a stack of (S, b) instances.

    Returns (Y, iters, resid): iters[k] < 0 flags non-convergence of
    instance k; Y then holds the last iterate and resid the final
    infinity-norm of the stationarity residual.
    """
    cdef Py_ssize_t m = sigmas.shape[0]
    cdef int n = <int>sigmas.shape[1]
    Y_arr = np.array(y0, dtype=np.float64, copy=True, order="C")
    iters_arr = np.empty(m, dtype=np.int32)
    resid_arr = np.empty(m, dtype=np.float64)
    work = np.empty(n * (n + 3), dtype=np.float64)
    cdef double[:, ::1] Y = Y_arr
    cdef int[::1] iters = iters_arr
    cdef double[::1] resid = resid_arr
    cdef double[::1] w = work
    cdef double* grad = &w[0]
    cdef double* sy = &w[n]
    cdef double* ytrial = &w[2 * n]
    cdef double* hess = &w[3 * n]
    cdef Py_ssize_t k
    cdef double r
    cdef int status
    with nogil:
        for k in range(m):
            status = _newton_one(&sigmas[k, 0, 0], &budgets[k, 0], &Y[k, 0],
                                 n, tol, max_iter, grad, hess, sy, ytrial, &r)
            iters[k] = status
            resid[k] = r
    return Y_arr, iters_arr, resid_arr


def newton_solve(double[:, ::1] sigma, double[::1] b, double[::1] y0,
                 double tol, int max_iter):
    """Single-instance variant of :func:`newton_solve_batch`."""
    cdef int n = <int>sigma.shape[0]
    y_arr = np.array(y0, dtype=np.float64, copy=True, order="C")
    work = np.empty(n * (n + 3), dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[::1] w = work
    cdef double r = 0.0
    cdef int status
    with nogil:
        status = _newton_one(&sigma[0, 0], &b[0], &y[0], n, tol, max_iter,
                             &w[0], &w[3 * n], &w[n], &w[2 * n], &r)
    return y_arr, status, r


def kkt_solve_batch(double[:, :, ::1] sigmas, double[:, ::1] budgets,
                    double[:, ::1] Y, double[:, :, ::1] rhs):
    """Solves (S_k + diag(b_k / y_k^2)) X_k = rhs_k for each instance.

    rhs has shape (m, n, r). Raises LinAlgError if any factorization fails.
    """
    cdef Py_ssize_t m = sigmas.shape[0]
    cdef int n = <int>sigmas.shape[1]
    cdef int r = <int>rhs.shape[2]
    X_arr = np.array(rhs, dtype=np.float64, copy=True, order="C")
    work = np.empty(n * n + n, dtype=np.float64)
    cdef double[:, :, ::1] X = X_arr
    cdef double[::1] w = work
    cdef double* hess = &w[0]
    cdef double* col = &w[n * n]
    cdef Py_ssize_t k
    cdef int i, j, c, bad
    bad = -1
    with nogil:
        for k in range(m):
            for i in range(n):
                for j in range(n):
                    hess[i * n + j] = sigmas[k, i, j]
                hess[i * n + i] += budgets[k, i] / (Y[k, i] * Y[k, i])
            if _cholesky(hess, n) != 0:
                bad = <int>k
                break
            for c in range(r):
                for i in range(n):
                    col[i] = X[k, i, c]
                _chol_solve_vec(hess, col, n)
                for i in range(n):
                    X[k, i, c] = col[i]
    if bad >= 0:
        raise np.linalg.LinAlgError(
            f"stationarity system not positive definite at instance {bad}")
    return X_arr
