"""Backend parity: the compiled extension and the numpy fallback must agree
on every kernel, and the import-time selector must honor RBNET_BACKEND."""

import os
import subprocess
import sys

import numpy as np
import pytest

from rbnet._kernels import backend_name, fallback

from conftest import rand_budget, rand_pd

try:
    from rbnet._kernels import _core
except ImportError:
    _core = None

needs_compiled = pytest.mark.skipif(_core is None,
                                    reason="compiled extension not built")


def make_batch(rng, m, n, scale=1.0):
    sigmas = np.ascontiguousarray([rand_pd(rng, n, scale=scale) for _ in range(m)])
    budgets = np.ascontiguousarray([rand_budget(rng, n) for _ in range(m)])
    diag = np.sqrt(sigmas[:, np.arange(n), np.arange(n)])
    y0 = np.ascontiguousarray(1.0 / (n * diag))
    return sigmas, budgets, y0


@needs_compiled
def test_backends_agree_on_newton_solve(rng):
    for scale in (1.0, 1e-4):
        sigmas, budgets, y0 = make_batch(rng, 17, 7, scale=scale)
        yc, ic, rc = _core.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
        yf, if_, rf = fallback.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
        assert (ic >= 0).all() and (if_ >= 0).all()
        assert np.abs(yc - yf).max() < 1e-9 * np.abs(yc).max()


@needs_compiled
def test_backends_agree_on_kkt_solve(rng):
    sigmas, budgets, y0 = make_batch(rng, 11, 5)
    Y, iters, _ = _core.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
    rhs = np.ascontiguousarray(rng.standard_normal((11, 5, 4)))
    xc = _core.kkt_solve_batch(sigmas, budgets, Y, rhs)
    xf = fallback.kkt_solve_batch(sigmas, budgets, Y, rhs)
    assert np.allclose(xc, xf, atol=1e-11 * max(1.0, np.abs(xc).max()))


@needs_compiled
def test_single_solve_matches_batch(rng):
    sigmas, budgets, y0 = make_batch(rng, 3, 6)
    Yb, _, _ = _core.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
    y1, it, res = _core.newton_solve(sigmas[0], budgets[0], y0[0], 1e-12, 200)
    assert np.array_equal(y1, Yb[0])
    assert it >= 0 and res <= 1e-12


def test_nonconvergence_flagged(rng):
    sigmas, budgets, y0 = make_batch(rng, 2, 4)
    for impl in filter(None, (fallback, _core)):
        Y, iters, resid = impl.newton_solve_batch(sigmas, budgets, y0, 1e-12, 0)
        assert (iters < 0).all()
        assert (resid > 1e-12).all()


def test_fallback_handles_mixed_convergence_speeds(rng):
    # one instance much harder than the rest exercises the frozen-row paths
    sigmas, budgets, y0 = make_batch(rng, 6, 5)
    y0[3] = y0[3] * 1e4  # a bad start for one row only
    Y, iters, resid = fallback.newton_solve_batch(sigmas, budgets, y0, 1e-12, 200)
    assert (iters >= 0).all()
    G = np.einsum("kij,kj->ki", sigmas, Y) - budgets / Y
    assert np.abs(G).max() <= 1e-12


def test_backend_env_override():
    code = ("import rbnet._kernels as k; print(k.backend_name())")
    for forced in ("python",) + (("compiled",) if _core is not None else ()):
        env = dict(os.environ, RBNET_BACKEND=forced)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == forced


def test_invalid_backend_env_rejected():
    env = dict(os.environ, RBNET_BACKEND="fortran")
    code = "import rbnet._kernels"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode != 0
    assert "RBNET_BACKEND" in out.stderr


def test_active_backend_reported():
    assert backend_name() in ("compiled", "python")
