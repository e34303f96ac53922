"""Independent reference solvers and instance builders shared by the tests."""
import numpy as np
from scipy.optimize import linprog

from ssmc.group_algebra import build_cyclic_shift_rep, build_group_dictionary
from ssmc.synthetic import generate_submodule_basis, sample_semi_random


def l1_basis_pursuit(M, y):
    """min |c|_1 s.t. Mc = y as a linear program over c = p - q, p, q >= 0."""
    n, m = M.shape
    res = linprog(np.ones(2 * m), A_eq=np.hstack([M, -M]), b_eq=y, bounds=(0, None),
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return res.x[:m] - res.x[m:]


def group_basis_pursuit_cvx(M, y, K, N_G):
    """Primal optimum of min |reshape(c)|_{1,2} s.t. Mc = y via cvxpy."""
    import cvxpy as cp

    c = cp.Variable(K * N_G)
    rows = cp.reshape(c, (N_G, K), order="C").T      # row k = entries k, K+k, ...
    prob = cp.Problem(cp.Minimize(cp.sum(cp.norm(rows, 2, axis=1))), [M @ c == y])
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value), np.asarray(c.value)


def a3_instance(seed):
    """Random trivial-group basis pursuit with a sparse generator."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 16))
    K = int(rng.integers(n + 2, 2 * n + 4))
    M = rng.standard_normal((n, K))
    M /= np.linalg.norm(M, axis=0)
    c0 = np.zeros(K)
    c0[rng.choice(K, size=max(1, n // 4), replace=False)] = rng.standard_normal(max(1, n // 4))
    return M, M @ c0


def a2_instance(seed):
    """Two submodules under a cyclic shift group; the target lies in the first.

    Returns ``(D, y, T, basis)`` with ``T`` the 0-based base columns drawn
    from the target's submodule.
    """
    rng = np.random.default_rng(seed)
    N_G = int(rng.integers(1, 5))
    n1 = 20 // N_G
    rep = build_cyclic_shift_rep(n1, N_G)
    s = rng.integers(2**32, size=3)
    b1 = generate_submodule_basis(rep, 1, int(s[0]))
    b2 = generate_submodule_basis(rep, 1, int(s[1]))
    K1 = int(rng.integers(2, 8))
    K2 = int(rng.integers(1, 15 - K1 + 1))
    ds = sample_semi_random([b1, b2], [K1 + 1, K2], int(s[2]))
    y = ds.X[:, 0]
    D = build_group_dictionary(ds.X[:, 1:], rep)
    T = np.arange(K1)
    return D, y, T, b1
