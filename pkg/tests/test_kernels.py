"""Compiled and numpy kernels must agree."""
import numpy as np
import pytest

from ssmc import _fallback, kernels

core = pytest.importorskip("ssmc._core")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("K,NG", [(1, 1), (5, 3), (17, 8)])
def test_row_norms_and_shrink(K, NG, rng):
    v = rng.standard_normal(K * NG)
    np.testing.assert_allclose(core.group_row_norms(v, K, NG),
                               _fallback.group_row_norms(v, K, NG), rtol=1e-14)
    for tau in (0.0, 0.3, 10.0):
        np.testing.assert_allclose(core.block_shrink(v, K, NG, tau),
                                   _fallback.block_shrink(v, K, NG, tau), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("prox,alpha,D_sign", [(0, 1.0, -1.0), (1, 0.0, 1.0)])
@pytest.mark.parametrize("relax", [1.0, 1.5])
def test_admm_chunk_equivalence(prox, alpha, D_sign, relax, rng):
    n, K, NG = 6, 4, 3
    M = rng.standard_normal((n, K * NG))
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    Vt = np.ascontiguousarray(Vt)
    p = rng.standard_normal(n)
    D = D_sign * np.ones(n)
    state = {}
    for name, mod in (("core", core), ("py", _fallback)):
        z, u, x = np.zeros(K * NG), np.zeros(K * NG), np.zeros(K * NG)
        hist = np.zeros((40, 3))
        out = mod.admm_chunk(Vt, p, D, alpha, prox, 0.5, relax, z, u, x, K, NG, 40,
                             0.0, 0.0, 1.0, hist)
        state[name] = (out, z, u, x, hist)
    (oc, zc, uc, xc, hc), (op, zp, up, xp, hp) = state["core"], state["py"]
    assert oc[0] == op[0] == 40
    for a, b in ((zc, zp), (uc, up), (xc, xp), (hc, hp)):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_early_stop_same_iteration(rng):
    n, K, NG = 5, 3, 2
    M = rng.standard_normal((n, K * NG))
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    Vt = np.ascontiguousarray(Vt)
    y = M @ np.r_[1.0, 0, 0, 0.5, 0, 0]
    p = (np.linalg.svd(M, full_matrices=False)[0].T @ y) / s
    runs = []
    for mod in (core, _fallback):
        z, u, x = np.zeros(6), np.zeros(6), np.zeros(6)
        runs.append(mod.admm_chunk(Vt, p, -np.ones(n), 1.0, 0, 1.0, 1.0, z, u, x, K, NG,
                                   5000, 1e-6, 1e-6, 1.0)[0])
    assert runs[0] == runs[1] < 5000
