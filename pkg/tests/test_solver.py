import numpy as np
import pytest

from ssmc.group_algebra import (GroupDictionary, build_cyclic_shift_rep, build_group_dictionary,
                                norm_1_2, norm_inf_2, reshape_group, trivial_rep)
from ssmc.solver import (CertificateError, InfeasibleError, SolverConfig, block_soft_threshold,
                         check_certificate, group_dual_direction, solve, solve_dual,
                         solve_primal, solve_regularized)

from conftest import random_instance
from oracles import a2_instance, a3_instance, group_basis_pursuit_cvx, l1_basis_pursuit

I2 = np.eye(2)
y34 = np.array([3.0, 4.0])


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rho=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(tol_primal=-1)
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"bogus": 1})
    cfg = SolverConfig.from_dict({"rho": 2.0, "reg_lambda": 5.0})
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg


def test_primal_trivial_identity():
    r = solve_primal(y34, I2, K=2, N_G=1)
    np.testing.assert_allclose(r.c, [3, 4], atol=1e-9)
    assert r.objective == pytest.approx(7, abs=1e-9) and r.converged


def test_primal_single_group_block():
    r = solve_primal(y34, I2, K=1, N_G=2)
    np.testing.assert_allclose(r.C, [[3, 4]], atol=1e-9)
    assert r.objective == pytest.approx(5, abs=1e-9)


def test_primal_picks_matching_column(rng):
    M = rng.standard_normal((3, 3))
    M /= np.linalg.norm(M, axis=0)
    r = solve_primal(M[:, 0], M, K=3, N_G=1)
    np.testing.assert_allclose(r.c, [1, 0, 0], atol=1e-8)
    assert r.objective == pytest.approx(1, abs=1e-8)


def test_result_invariants(rng):
    for _ in range(5):
        D, y = random_instance(rng, 10, 6, 3)
        r = solve(y, D)
        assert r.objective == pytest.approx(norm_1_2(r.C), rel=1e-12)
        np.testing.assert_array_equal(r.C, reshape_group(r.c, D.K, D.N_G))
        if r.converged:
            assert r.residual <= 1e-8 * (1 + np.linalg.norm(y))


def test_infeasible_target():
    M = np.array([[1.0], [0.0]])
    with pytest.raises(InfeasibleError):
        solve_primal(np.array([0.0, 1.0]), M, K=1, N_G=1)


def test_zero_target():
    r = solve_primal(np.zeros(2), I2, K=2, N_G=1)
    assert not np.any(r.c) and r.converged
    r = solve_regularized(np.zeros(2), I2, SolverConfig(reg_lambda=3.0), K=2, N_G=1)
    assert not np.any(r.c)


def test_block_soft_threshold_examples():
    np.testing.assert_allclose(block_soft_threshold(np.array([[3.0, 4]]), 1), [[2.4, 3.2]])
    np.testing.assert_array_equal(block_soft_threshold(np.array([[0.5, 0]]), 1), [[0, 0]])
    R = np.array([[1.0, -2], [0, 0]])
    np.testing.assert_allclose(block_soft_threshold(R, 1e-12), R, atol=1e-11)


def test_block_soft_threshold_is_prox(rng):
    def obj(Z, R, tau):
        return tau * norm_1_2(Z) + 0.5 * np.sum((Z - R) ** 2)

    for _ in range(100):
        K, N_G = rng.integers(1, 5, size=2)
        R = rng.standard_normal((K, N_G)) * rng.uniform(0.1, 3)
        tau = rng.uniform(0.05, 2)
        Z = block_soft_threshold(R, tau)
        base = obj(Z, R, tau)
        pert = Z + 1e-2 * rng.standard_normal((1000, K, N_G))
        vals = tau * np.sqrt((pert ** 2).sum(axis=2)).sum(axis=1) + 0.5 * ((pert - R) ** 2).sum(axis=(1, 2))
        assert np.all(vals >= base - 1e-12)


def test_dual_examples():
    lam, val, ok = solve_dual(y34, I2, K=2, N_G=1)
    np.testing.assert_allclose(lam, [1, 1], atol=1e-7)
    assert val == pytest.approx(7, abs=1e-6)
    lam, val, ok = solve_dual(y34, I2, K=1, N_G=2)
    np.testing.assert_allclose(lam, [0.6, 0.8], atol=1e-7)
    assert val == pytest.approx(5, abs=1e-6)


def test_strong_duality_and_dual_feasibility(rng):
    for _ in range(10):
        n = int(rng.integers(4, 15))
        D, y = random_instance(rng, n, int(rng.integers(2, 10)), int(rng.integers(1, 4)))
        p = solve_primal(y, D)
        lam, val, _ = solve_dual(y, D)
        assert norm_inf_2(reshape_group(D.expanded.T @ lam, D.K, D.N_G)) <= 1 + 1e-6
        assert abs(p.objective - val) <= 1e-6 * (1 + p.objective)
        # weak duality, allowing for the primal point's own residual
        assert val <= p.objective + p.residual * np.linalg.norm(lam) + 1e-12


def test_primal_matches_cvxpy(rng):
    pytest.importorskip("cvxpy")
    for _ in range(8):
        n = int(rng.integers(4, 18))
        D, y = random_instance(rng, n, int(rng.integers(2, 12)), int(rng.integers(1, 4)))
        ref, _ = group_basis_pursuit_cvx(D.expanded, y, D.K, D.N_G)
        assert solve_primal(y, D).objective == pytest.approx(ref, rel=1e-6, abs=1e-7)


def test_trivial_group_matches_linear_program():
    for seed in range(5):
        M, y = a3_instance(seed)
        ref = l1_basis_pursuit(M, y)
        got = solve_primal(y, M, K=M.shape[1], N_G=1)
        np.testing.assert_allclose(got.c, ref, atol=1e-6)


def test_regularized_large_lambda_matches_exact(rng):
    M = rng.standard_normal((10, 20))
    y = M @ np.r_[1.0, -0.5, np.zeros(18)]
    exact = solve_primal(y, M, K=20, N_G=1)
    reg = solve_regularized(y, M, SolverConfig(reg_lambda=1e6), K=20, N_G=1)
    np.testing.assert_allclose(reg.c, exact.c, atol=1e-3)


def test_regularized_small_lambda_is_zero(rng):
    M = rng.standard_normal((6, 8))
    y = rng.standard_normal(6)
    lam = 0.4 / np.max(np.abs(M.T @ y))       # below the 1 / (2 |M^T y|_inf) threshold
    r = solve_regularized(y, M, SolverConfig(reg_lambda=lam), K=8, N_G=1)
    assert np.max(np.abs(r.c)) <= 1e-8


def test_regularized_residual_monotone(rng):
    D, y = random_instance(rng, 12, 8, 2)
    res = [solve_regularized(y, D, SolverConfig(reg_lambda=lam)).residual
           for lam in (0.5, 1, 3, 10, 100)]
    assert all(b <= a + 1e-7 for a, b in zip(res, res[1:]))


def test_certificate_unit_example():
    rep = GroupDictionary(np.array([[0.6], [0.8]]), None, np.eye(2))
    C = np.array([[0.6, 0.8]])
    r = check_certificate(C, np.array([0.6, 0.8]), np.eye(2), [0], K=1, N_G=2)
    assert r.passed and r.cond_c1_err == pytest.approx(0, abs=1e-15)
    assert r.cond_c2_max == 0 and r.cond_c3_max == 0
    del rep


def test_certificate_support_outside_T():
    with pytest.raises(CertificateError):
        check_certificate(np.array([[1.0], [1.0]]), np.ones(2), np.eye(2), [0], K=2, N_G=1)


def test_certificate_ground_truth_and_scaled_dual():
    D, y, T, basis = a2_instance(3)
    p = solve_primal(y, D)
    lam, _, _ = solve_dual(y, D)
    good = check_certificate(p.C, lam, D, T)
    assert good.passed
    bad = check_certificate(p.C, 2 * lam, D, T)
    assert not bad.passed and bad.cond_c1_err > 1e-4


def test_group_dual_direction():
    np.testing.assert_allclose(group_dual_direction([3.0, 4.0], np.eye(2)), [0.6, 0.8])
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)))
    v = group_dual_direction([1.0, -2.0, 0.5], Q)
    assert np.linalg.norm(v) == pytest.approx(1, abs=1e-12)
    assert np.linalg.norm(v - Q @ (Q.T @ v)) <= 1e-12
    with pytest.raises(ValueError):
        group_dual_direction([0.0, 0.0], np.eye(2))


def test_shift_copy_solved_by_one_block():
    rep = build_cyclic_shift_rep(3, 4)
    x = np.random.default_rng(1).standard_normal(12)
    x /= np.linalg.norm(x)
    D = build_group_dictionary(x[:, None], rep)
    r = solve_primal(rep.apply(2, x), D)
    assert r.objective == pytest.approx(1, abs=1e-8)
    assert abs(r.C[0, 2]) == pytest.approx(1, abs=1e-8)


def test_trace_records(rng):
    D, y = random_instance(rng, 8, 5, 2)
    recs = []
    solve(y, D, trace=recs.append)
    assert recs and set(recs[0]) >= {"iter", "primal_res", "dual_res", "objective"}
    assert [r["iter"] for r in recs] == list(range(1, len(recs) + 1))


def test_trivial_rep_dictionary_is_raw_matrix(rng):
    X = rng.standard_normal((5, 7))
    D = build_group_dictionary(X, trivial_rep(5))
    a = solve_primal(X[:, 0] + X[:, 1], D)
    b = solve_primal(X[:, 0] + X[:, 1], X, K=7, N_G=1)
    np.testing.assert_allclose(a.c, b.c, atol=1e-12)
