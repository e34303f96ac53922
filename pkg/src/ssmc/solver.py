"""Group-sparse self-representation programs.

Primal::

    min |reshape(c)|_{1,2}   s.t.  M c = y

regularized variant::

    min |reshape(c)|_{1,2} + reg_lambda * |M c - y|^2

and the dual::

    max <y, lam>   s.t.  |reshape(M^T lam)|_{inf,2} <= 1

All three are solved by the same operator-splitting loop (see
``kernels.admm_chunk``) after a thin SVD ``M = U diag(s) Vt``. The affine or
quadratic step is then a rank-r update in the SVD coordinates, which keeps
every iteration at two products with ``Vt`` regardless of the mode.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .group_algebra import (GroupDictionary, complement, norm_1_2, norm_inf_2,
                            reshape_group)

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
FEASIBILITY_TOL = 1e-8
_CHUNK = 50


class InfeasibleError(ValueError):
    """``y`` is not in the range of the dictionary."""


class CertificateError(ValueError):
    """The row support of the coefficients is not inside ``T``."""


@dataclass(frozen=True)
class SolverConfig:
    """Splitting-method settings.

    ``reg_lambda`` set (not None) selects the regularized program. ``rho``
    is the initial splitting penalty; with ``adaptive_rho`` it is rescaled
    by 2 whenever one residual exceeds the other by more than 10x.
    """

    rho: float = 1.0
    max_iters: int = 5000
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    reg_lambda: float | None = None
    adaptive_rho: bool = True
    support_eps: float = 1e-6
    relax: float = 1.0
    polish: bool = True

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.reg_lambda is not None and self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverConfig":
        d = dict(d or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class SolveResult:
    c: np.ndarray
    C: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    dual: np.ndarray | None = None
    rho: float = 1.0
    history: list = field(default_factory=list, repr=False)


@dataclass
class CertificateReport:
    support: np.ndarray
    cond_c1_err: float
    cond_c2_max: float
    cond_c3_max: float
    passed: bool


@dataclass(frozen=True)
class Factorization:
    """Thin SVD of a dictionary, truncated at relative rank tolerance."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    @classmethod
    def of(cls, M: np.ndarray) -> "Factorization":
        M = np.asarray(M, dtype=float)
        if M.size == 0:
            return cls(np.zeros((M.shape[0], 0)), np.zeros(0), np.zeros((0, M.shape[1])))
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        keep = s > RANK_TOL * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
        return cls(np.ascontiguousarray(U[:, keep]), s[keep].copy(),
                   np.ascontiguousarray(Vt[keep]))

    @property
    def rank(self) -> int:
        return self.s.size


def _unpack(M, K=None, N_G=None):
    if isinstance(M, GroupDictionary):
        return M.expanded, M.K, M.N_G
    M = np.asarray(M, dtype=float)
    if K is None or N_G is None:
        raise ValueError("K and N_G are required for a raw dictionary matrix")
    if M.shape[1] != K * N_G:
        raise ValueError(f"dictionary has {M.shape[1]} columns, expected {K * N_G}")
    return M, K, N_G


def block_soft_threshold(R, tau: float) -> np.ndarray:
    """Proximal map of ``tau * |.|_{1,2}`` applied to a group matrix."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    R = np.asarray(R, dtype=float)
    K, N_G = R.shape
    flat = kernels.block_shrink(np.ascontiguousarray(R.T).ravel(), K, N_G, float(tau))
    return reshape_group(flat, K, N_G).copy()


def _emit(trace, hist, start):
    if trace is None:
        return
    for j, (pr, dr, obj) in enumerate(hist):
        trace({"iter": start + j + 1, "primal_res": float(pr), "dual_res": float(dr),
               "objective": float(obj)})


def _run(Vt, params, alpha, prox, z, u, K, NG, cfg: SolverConfig, rho0: float,
         trace, check: Callable[[np.ndarray, np.ndarray, float, bool], bool]):
    """Chunked splitting loop with residual balancing.

    ``params(rho)`` returns the ``(p, D)`` pair of the affine step for the
    current penalty. After every chunk ``check(z, u, rho, kernel_done)``
    decides whether to stop; ``kernel_done`` says the residual tolerances
    were met inside the chunk.
    """
    m = K * NG
    x = np.zeros(m)
    rho = rho0
    p, D = params(rho)
    total = 0
    converged = False
    while total < cfg.max_iters:
        n_it = min(_CHUNK, cfg.max_iters - total)
        eps_pri = cfg.tol_primal * (1.0 + np.linalg.norm(z))
        eps_dual = cfg.tol_dual * (1.0 + rho * np.linalg.norm(u))
        hist = np.zeros((n_it, 3)) if trace is not None else None
        ran, r_norm, s_norm = kernels.admm_chunk(
            Vt, p, D, alpha, prox, 1.0 / rho, cfg.relax, z, u, x, K, NG, n_it,
            eps_pri, eps_dual, rho, hist)
        if hist is not None:
            _emit(trace, hist[:ran], total)
        total += ran
        if check(z, u, rho, ran < n_it):
            converged = True
            break
        if cfg.adaptive_rho:
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                u /= 2.0
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                u *= 2.0
            else:
                continue
            p, D = params(rho)
    return total, converged, rho


def _feasibility_gap(y, F: Factorization):
    return float(np.linalg.norm(y - F.U @ (F.U.T @ y)))


def _cols_of(rows, K, NG):
    return (np.arange(NG)[:, None] * K + np.asarray(rows, dtype=np.intp)[None, :]).ravel()


def _newton_kkt(Ms, y, cs, lam, NG, iters=20):
    """Damped Newton on the support-restricted optimality system.

    Unknowns are the support coefficients ``cs`` (flat, block layout) and
    ``lam``; equations are ``unit_rows(cs) = Ms^T lam`` and ``Ms cs = y``.
    Returns None if a row collapses or no step reduces the residual.
    """
    k = cs.size // NG
    n = Ms.shape[0]
    ynorm = 1.0 + np.linalg.norm(y)

    def resid(c, l):
        C = c.reshape(NG, k).T
        nrm = np.linalg.norm(C, axis=1)
        if np.any(nrm == 0.0):
            return None, None, None
        unit = C / nrm[:, None]
        r = np.concatenate([unit.T.ravel() - Ms.T @ l, (Ms @ c - y) / ynorm])
        return r, unit, nrm

    r, unit, nrm = resid(cs, lam)
    if r is None:
        return None
    for _ in range(iters):
        merit = float(r @ r)
        if merit < 1e-28 * k:
            break
        # d unit(c_i) = (I - u u^T) / |c_i| dc_i, assembled in block layout
        H = np.zeros((k * NG, k * NG))
        for i in range(k):
            idx = np.arange(NG) * k + i
            H[np.ix_(idx, idx)] = (np.eye(NG) - np.outer(unit[i], unit[i])) / nrm[i]
        J = np.block([[H, -Ms.T], [Ms / ynorm, np.zeros((n, n))]])
        # J is singular whenever Ms is rank deficient (lam is then free along
        # null(Ms^T)), so take the least-squares step
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        for _ in range(12):
            c_new, l_new = cs + t * step[:k * NG], lam + t * step[k * NG:]
            r_new, unit_new, nrm_new = resid(c_new, l_new)
            if r_new is not None and float(r_new @ r_new) < (1.0 - 1e-4 * t) * merit:
                break
            t *= 0.5
        else:
            return None
        cs, lam, r, unit, nrm = c_new, l_new, r_new, unit_new, nrm_new
    return cs, lam


def _kkt_polish(Mmat, K, NG, y, rows, lam_hint, tol_res, c_hint=None, kkt_tol=1e-9):
    """Re-solve on a candidate row support and verify optimality.

    The support coefficients come from least squares (or, when ``c_hint`` is
    given, from Newton's method on the restricted optimality system started
    at ``c_hint``); the dual vector is corrected from ``lam_hint`` to match
    their unit rows. Returns ``(c, lam)`` only if the pair passes the
    optimality check: feasibility, exact subgradient match on the support
    and ``|.|_{inf,2} <= 1 + kkt_tol`` off it. Otherwise None.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        return None
    Ms = Mmat[:, _cols_of(rows, K, NG)]
    if c_hint is None:
        cs = np.linalg.lstsq(Ms, y, rcond=None)[0]
    else:
        out = _newton_kkt(Ms, y, c_hint[_cols_of(rows, K, NG)], lam_hint, NG)
        if out is None:
            return None
        cs, lam_hint = out
    Cs = cs.reshape(NG, rows.size).T
    nrm = np.linalg.norm(Cs, axis=1)
    if nrm.max() == 0.0:
        return None
    keep = nrm > 1e-9 * nrm.max()
    rows, Cs, nrm = rows[keep], Cs[keep], nrm[keep]
    cols = _cols_of(rows, K, NG)
    Ms = Mmat[:, cols]
    cs = Cs.T.ravel()
    if np.linalg.norm(Ms @ cs - y) > tol_res:
        return None
    g = (Cs / nrm[:, None]).T.ravel()
    lam = lam_hint + np.linalg.lstsq(Ms.T, g - Ms.T @ lam_hint, rcond=None)[0]
    if np.linalg.norm(Ms.T @ lam - g) > kkt_tol * np.sqrt(rows.size):
        return None
    W = reshape_group(Mmat.T @ lam, K, NG)
    off = np.ones(K, dtype=bool)
    off[rows] = False
    if norm_inf_2(W[off]) > 1.0 + kkt_tol:
        return None
    c = np.zeros(K * NG)
    c[cols] = cs
    return c, lam


class _Polisher:
    """Polishes on stable row supports, backing off exponentially per support."""

    def __init__(self, Mmat, K, NG, y, tol_res):
        self.args = (Mmat, K, NG, y)
        self.tol_res = tol_res
        self.last = None
        self.chunk = 0
        self.attempts = {}

    def __call__(self, z, lam_hint):
        Mmat, K, NG, y = self.args
        nrm = kernels.group_row_norms(z, K, NG)
        if not nrm.any():
            return None
        key = np.flatnonzero(nrm > 1e-3 * nrm.max()).tobytes()
        self.chunk += 1
        stable = self.last is not None and key == self.last
        self.last = key
        if not stable:
            return None
        count, when = self.attempts.get(key, (0, 0))
        if count and self.chunk - when < 2 ** count:
            return None
        self.attempts[key] = (count + 1, self.chunk)
        return _try_polish(Mmat, K, NG, y, z, nrm, lam_hint, self.tol_res)


def _try_polish(Mmat, K, NG, y, z, nrm, lam_hint, tol_res):
    candidates = [np.flatnonzero(nrm), np.flatnonzero(nrm > 1e-3 * nrm.max())]
    for rows in candidates:
        if rows.size * NG <= Mmat.shape[0]:
            out = _kkt_polish(Mmat, K, NG, y, rows, lam_hint, tol_res)
            if out is not None:
                return out
        if rows.size * NG <= 4 * Mmat.shape[0]:
            out = _kkt_polish(Mmat, K, NG, y, rows, lam_hint, tol_res, c_hint=z)
            if out is not None:
                return out
    return None


def solve_primal(y, M, cfg: SolverConfig | None = None, *, K: int | None = None,
                 N_G: int | None = None, factor: Factorization | None = None,
                 trace: Callable[[dict], None] | None = None) -> SolveResult:
    """Solve the equality-constrained group-sparse program.

    ``M`` is a :class:`GroupDictionary` or an ``n x K*N_G`` matrix (then
    ``K`` and ``N_G`` are required). Raises :class:`InfeasibleError` when
    ``y`` has a least-squares residual above ``1e-8 * |y|``.

    With ``cfg.polish`` the splitting iterate is periodically re-solved on
    its row support; a polished point is accepted only when it passes the
    optimality check in :func:`_kkt_polish`.
    """
    cfg = cfg or SolverConfig()
    if cfg.reg_lambda is not None:
        raise ValueError("solve_primal is the exact program; use solve_regularized")
    Mmat, K, NG = _unpack(M, K, N_G)
    y = np.asarray(y, dtype=float)
    F = factor or Factorization.of(Mmat)
    ynorm = float(np.linalg.norm(y))
    if _feasibility_gap(y, F) > FEASIBILITY_TOL * ynorm:
        raise InfeasibleError("y is not in the range of the dictionary")
    m = K * NG
    if ynorm == 0.0 or F.rank == 0:
        z = np.zeros(m)
        return SolveResult(z, reshape_group(z, K, NG), 0.0, ynorm, 0, True,
                           dual=np.zeros_like(y), rho=cfg.rho)

    Uty = F.U.T @ y
    p = Uty / F.s
    D = -np.ones(F.rank)
    z = F.Vt.T @ p  # least-norm feasible start
    u = np.zeros(m)
    tol_res = cfg.tol_primal * (1.0 + ynorm)
    polished = {}
    polisher = _Polisher(Mmat, K, NG, y, tol_res)

    def dual_estimate(uu, rho):
        # rho*u is a subgradient of the objective at z, and M^T lam = rho*u
        return F.U @ ((F.Vt @ (rho * uu)) / F.s)

    def check(zz, uu, rho, kernel_done):
        if kernel_done and float(np.linalg.norm(F.s * (F.Vt @ zz) - Uty)) <= tol_res:
            return True
        if cfg.polish:
            out = polisher(zz, dual_estimate(uu, rho))
            if out is not None:
                polished["c"], polished["lam"] = out
                return True
        return False

    iters, converged, rho = _run(F.Vt, lambda rho: (p, D), 1.0, kernels.PROX_SHRINK,
                                 z, u, K, NG, cfg, cfg.rho, trace, check)
    if polished:
        z, lam = polished["c"], polished["lam"]
    else:
        lam = dual_estimate(u, rho)
        if not converged:
            log.debug("solve_primal: no convergence in %d iterations", iters)
    C = reshape_group(z, K, NG)
    res = float(np.linalg.norm(Mmat @ z - y))
    return SolveResult(z, C, norm_1_2(C), res, iters, converged, dual=lam, rho=rho)


def solve_regularized(y, M, cfg: SolverConfig, *, K: int | None = None,
                      N_G: int | None = None, factor: Factorization | None = None,
                      trace: Callable[[dict], None] | None = None) -> SolveResult:
    """Solve ``min |reshape(c)|_{1,2} + reg_lambda |Mc - y|^2``.

    ``objective`` in the result is the group norm alone (the contract for
    both modes); the fit term is available as ``residual``.
    """
    if cfg.reg_lambda is None or cfg.reg_lambda <= 0:
        raise ValueError("solve_regularized needs reg_lambda > 0")
    Mmat, K, NG = _unpack(M, K, N_G)
    y = np.asarray(y, dtype=float)
    F = factor or Factorization.of(Mmat)
    m = K * NG
    lam2 = 2.0 * cfg.reg_lambda
    if not np.any(y) or F.rank == 0:
        z = np.zeros(m)
        return SolveResult(z, reshape_group(z, K, NG), 0.0, float(np.linalg.norm(y)), 0,
                           True, rho=cfg.rho)
    Uty = F.U.T @ y
    s2 = F.s ** 2

    def params(rho):
        denom = lam2 * s2 + rho
        return lam2 * F.s * Uty / denom, -lam2 * s2 / denom

    z = np.zeros(m)
    u = np.zeros(m)
    iters, converged, rho = _run(F.Vt, params, 1.0, kernels.PROX_SHRINK, z, u, K, NG,
                                 cfg, cfg.rho, trace, lambda zz, uu, rr, done: done)
    C = reshape_group(z, K, NG)
    res = float(np.linalg.norm(Mmat @ z - y))
    return SolveResult(z, C, norm_1_2(C), res, iters, converged, rho=rho)


def solve(y, M, cfg: SolverConfig | None = None, **kw) -> SolveResult:
    """Dispatch on ``cfg.reg_lambda``."""
    cfg = cfg or SolverConfig()
    if cfg.reg_lambda is None:
        return solve_primal(y, M, cfg, **kw)
    return solve_regularized(y, M, cfg, **kw)


def solve_dual(y, M, cfg: SolverConfig | None = None, *, K: int | None = None,
               N_G: int | None = None, factor: Factorization | None = None,
               trace: Callable[[dict], None] | None = None):
    """Solve the dual program; returns ``(lam, value, converged)``.

    ``lam`` is restricted to ``range(M)`` (the component in ``null(M^T)`` is
    free in the constraint and only matters when ``y`` is infeasible), and
    is rescaled if necessary so that it is exactly dual feasible; ``value``
    is therefore always a valid lower bound on the primal optimum.

    With ``cfg.polish`` the rows saturating the constraint are used as a
    candidate support for an optimality-verified re-solve.
    """
    cfg = cfg or SolverConfig()
    Mmat, K, NG = _unpack(M, K, N_G)
    y = np.asarray(y, dtype=float)
    F = factor or Factorization.of(Mmat)
    m = K * NG
    if not np.any(y) or F.rank == 0:
        return np.zeros_like(y), 0.0, True
    feasible = _feasibility_gap(y, F) <= FEASIBILITY_TOL * np.linalg.norm(y)
    if not feasible:
        log.warning("solve_dual: y is outside range(M); the dual is unbounded along null(M^T)")
    Uty = F.U.T @ y
    ones = np.ones(F.rank)
    tol_res = cfg.tol_primal * (1.0 + np.linalg.norm(y))
    polished = {}
    polisher = _Polisher(Mmat, K, NG, y, tol_res)

    def params(rho):
        return Uty / (rho * F.s), ones

    def lam_of(ww, uu, rho):
        return F.U @ (Uty / (rho * F.s ** 2) + (F.Vt @ (ww - uu)) / F.s)

    def check(ww, uu, rho, kernel_done):
        if kernel_done:
            return True
        if cfg.polish and feasible:
            # saturated rows of the dual iterate are the candidate support
            active = np.tile(kernels.group_row_norms(ww, K, NG) >= 1.0 - 1e-6, NG)
            out = polisher(ww * active, lam_of(ww, uu, rho))
            if out is not None:
                polished["lam"] = out[1]
                return True
        return False

    w = np.zeros(m)
    u = np.zeros(m)
    iters, converged, rho = _run(F.Vt, params, 0.0, kernels.PROX_BALL, w, u, K, NG, cfg,
                                 cfg.rho, trace, check)
    lam = polished["lam"] if polished else lam_of(w, u, rho)
    lam = _make_feasible(lam, Mmat, K, NG)
    return lam, float(y @ lam), converged


def _make_feasible(lam, Mmat, K, NG):
    scale = norm_inf_2(reshape_group(Mmat.T @ lam, K, NG))
    if scale > 1.0:
        lam = lam / scale
    return lam


def support_of(C, support_eps: float = 1e-6) -> np.ndarray:
    """Rows of ``C`` whose l2 norm exceeds ``support_eps`` times the largest."""
    nrm = np.sqrt(np.einsum("ij,ij->i", C, C))
    top = nrm.max() if nrm.size else 0.0
    if top == 0.0:
        return np.zeros(0, dtype=np.intp)
    return np.flatnonzero(nrm > support_eps * top)


def check_certificate(C, lam, M, T: Iterable[int], *, K: int | None = None,
                      N_G: int | None = None, support_eps: float = 1e-6,
                      cert_tol: float = 1e-4, strict_margin: float = 1e-8
                      ) -> CertificateReport:
    """Evaluate the three dual-certificate conditions for ``(C, lam)``.

    ``T`` holds 0-based base-column indices. Maxima over empty row sets are
    0. Raises :class:`CertificateError` when the row support of ``C`` is not
    contained in ``T``.
    """
    Mmat, K, NG = _unpack(M, K, N_G)
    C = np.asarray(C, dtype=float)
    T = np.unique(np.asarray(list(T), dtype=np.intp))
    S = support_of(C, support_eps)
    if not np.all(np.isin(S, T)):
        raise CertificateError("row support of C is not contained in T")
    W = reshape_group(Mmat.T @ np.asarray(lam, dtype=float), K, NG)
    if S.size:
        Cs = C[S]
        unit = Cs / np.linalg.norm(Cs, axis=1, keepdims=True)
        c1 = float(np.max(np.linalg.norm(W[S] - unit, axis=1)))
    else:
        c1 = 0.0
    T_minus_S = np.setdiff1d(T, S)
    c2 = norm_inf_2(W[T_minus_S])
    c3 = norm_inf_2(W[complement(T, K)])
    passed = c1 <= cert_tol and c2 <= 1.0 + cert_tol and c3 < 1.0 - strict_margin
    return CertificateReport(S, c1, c2, c3, bool(passed))


def group_dual_direction(lam, Q) -> np.ndarray:
    """``Q lam / |lam|`` for a reduced-coordinate dual vector ``lam``."""
    lam = np.asarray(lam, dtype=float)
    Q = getattr(Q, "Q", Q)
    nrm = np.linalg.norm(lam)
    if nrm == 0.0:
        raise ValueError("zero dual vector has no direction")
    if Q.shape[1] != lam.size:
        raise ValueError(f"lam has length {lam.size}, basis has {Q.shape[1]} columns")
    return Q @ (lam / nrm)
