"""Pure numpy versions of the kernels in ``_core.pyx``.

Both modules expose the same three functions with identical semantics; see
:mod:`ssmc.kernels` for the selection logic.
"""
import numpy as np

PROX_SHRINK = 0
PROX_BALL = 1


def _rows(v, K, NG):
    return v.reshape(NG, K)


def group_row_norms(v, K, NG):
    """l2 norm of each row of reshape(v) (length K)."""
    b = _rows(np.asarray(v, dtype=float), K, NG)
    return np.sqrt(np.einsum("gk,gk->k", b, b))


def block_shrink(v, K, NG, tau, out=None):
    """Row-wise block soft threshold r -> r * max(0, 1 - tau/|r|)."""
    v = np.asarray(v, dtype=float)
    nrm = group_row_norms(v, K, NG)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > tau, 1.0 - tau / nrm, 0.0)
    res = (_rows(v, K, NG) * scale).ravel()
    if out is not None:
        out[:] = res
        return out
    return res


def _ball(v, K, NG):
    nrm = group_row_norms(v, K, NG)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > 1.0, 1.0 / nrm, 1.0)
    return (_rows(v, K, NG) * scale).ravel()


def admm_chunk(Vt, p, D, alpha, prox, tau, relax, z, u, x, K, NG, iters,
               eps_pri, eps_dual, rho, hist=None):
    """Run up to ``iters`` splitting iterations in place on ``z, u, x``.

    One iteration::

        v = z - u
        x = alpha * v + Vt.T @ (p + D * (Vt @ v))
        x = relax * x + (1 - relax) * z    # over-relaxation
        z = prox(x + u)        # block shrink by tau, or unit-ball projection
        u = u + x - z

    Returns ``(iterations_run, primal_res, dual_res)`` where
    ``primal_res = |x - z|`` and ``dual_res = rho * |z - z_old|``. Stops
    early once both residuals are within ``eps_pri`` / ``eps_dual``.
    ``hist``, when given, is an ``(iters, 3)`` array receiving
    ``(primal_res, dual_res, norm_1_2(z))`` per iteration.
    """
    r_norm = s_norm = np.inf
    for it in range(iters):
        v = z - u
        t = p + D * (Vt @ v)
        x[:] = Vt.T @ t
        if alpha != 0.0:
            x += alpha * v
        if relax != 1.0:
            x[:] = relax * x + (1.0 - relax) * z
        q = x + u
        z_old = z.copy()
        if prox == PROX_SHRINK:
            z[:] = block_shrink(q, K, NG, tau)
        else:
            z[:] = _ball(q, K, NG)
        u += x - z
        r_norm = float(np.linalg.norm(x - z))
        s_norm = rho * float(np.linalg.norm(z - z_old))
        if hist is not None:
            hist[it, 0] = r_norm
            hist[it, 1] = s_norm
            hist[it, 2] = float(group_row_norms(z, K, NG).sum())
        if r_norm <= eps_pri and s_norm <= eps_dual:
            return it + 1, r_norm, s_norm
    return iters, r_norm, s_norm
