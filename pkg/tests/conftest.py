import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ssmc", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ssmc")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def swap_rep():
    """{I, swap} acting on R^2."""
    from ssmc.group_algebra import GroupRepresentation

    return GroupRepresentation(np.stack([np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])]))


def random_instance(rng, n, K, N_G, feasible=True):
    """Random orthogonal-rep group dictionary and a target in its range."""
    from ssmc.group_algebra import GroupRepresentation, build_group_dictionary

    mats = [np.eye(n)]
    # powers of one random permutation give a cyclic, hence abelian, group
    p = rng.permutation(n)
    P = np.eye(n)[p]
    for _ in range(N_G - 1):
        mats.append(P @ mats[-1])
    rep = GroupRepresentation(np.stack(mats), validate=False)
    X = rng.standard_normal((n, K))
    D = build_group_dictionary(X, rep)
    if feasible:
        c = np.zeros(K * N_G)
        rows = rng.choice(K, size=max(1, min(K, n // (2 * N_G))), replace=False)
        for g in range(N_G):
            c[g * K + rows] = rng.standard_normal(rows.size)
        y = D.expanded @ c
    else:
        y = rng.standard_normal(n)
    return D, y


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
