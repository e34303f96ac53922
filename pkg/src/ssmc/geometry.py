"""Identifiability geometry of unions of submodules.

Everything here works in the reduced coordinates of one submodule: for a
basis ``Q`` (n x d) and points ``X = Q A``, the group dictionary
``A_G = Q^T [L_1 X, ..., L_{N_G} X]`` is ``d x K*N_G``. The symmetric body

    P° = { A_G b : |reshape(b)|_{1,2} <= 1 }

has support function ``h(u) = |reshape(A_G^T u)|_{inf,2}`` and in-radius
``min_{|u|=1} h(u)``. The SSC body keeps only the identity block and the
l1 ball, ``h_ssc(u) = max_k |<A_k, u>|``, so ``h >= h_ssc`` pointwise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .group_algebra import GroupRepresentation, build_cyclic_shift_rep, expand, reshape_group
from .synthetic import SubmoduleBasis, generate_submodule_basis, sample_semi_random


@dataclass(frozen=True)
class BoundParams:
    t: float
    Delta: float

    def __post_init__(self):
        # t = 0 is admitted as a boundary case for plain formula evaluation
        if not (self.t >= 0 and self.Delta > 0):
            raise ValueError("need t >= 0 and Delta > 0")


def _Q(b):
    return getattr(b, "Q", b)


def submodule_affinity(Qk, Ql, rep: GroupRepresentation) -> float:
    """``sqrt(sum_g |Qk^T L_g^T Ql|_F^2)``."""
    Qk, Ql = _Q(Qk), _Q(Ql)
    total = 0.0
    for g in range(rep.order):
        total += float(np.sum((rep.apply(g, Qk).T @ Ql) ** 2))
    return math.sqrt(total)


def subspace_affinity(Qk, Ql) -> float:
    return float(np.linalg.norm(_Q(Qk).T @ _Q(Ql)))


def reduced_group_dictionary(basis: SubmoduleBasis, X) -> np.ndarray:
    """``Q^T [L_1 X, ..., L_{N_G} X]`` for points ``X`` in ``range(Q)``."""
    return basis.Q.T @ expand(X, basis.rep)


def _check_unit(u):
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ValueError("direction must have unit norm")
    return u


def _layout(A_G, N_G):
    A_G = np.asarray(A_G, dtype=float)
    if A_G.ndim != 2 or N_G < 1 or A_G.shape[1] % N_G:
        raise ValueError("A_G columns must split into N_G equal blocks")
    return A_G, A_G.shape[1] // N_G


def support_function_P_polar(A_G, u, *, N_G: int = 1) -> float:
    """``h_{P°}(u) = |reshape(A_G^T u)|_{inf,2}``; ``N_G=1`` is the l1 (SSC) layout."""
    A_G, K = _layout(A_G, N_G)
    u = _check_unit(u)
    w = reshape_group(A_G.T @ u, K, N_G)
    return float(np.max(np.linalg.norm(w, axis=1)))


def support_function_P_ssc(A_G, u, *, N_G: int = 1) -> float:
    """Support function of the SSC body: the identity block under the l1 ball."""
    A_G, K = _layout(A_G, N_G)
    u = _check_unit(u)
    return float(np.max(np.abs(A_G[:, :K].T @ u)))


@dataclass
class InradiusEstimate:
    """One-sided estimate: ``r_hat >= r(P°)`` (a minimum over finitely many directions)."""

    r_hat: float
    R_hat: float
    direction: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, value, direction):
        return cls(float(value), 1.0 / float(value), direction)


def _batch_h(A_G, U, K, N_G, ssc):
    """Support values for the columns of ``U`` and the active row per column."""
    if ssc or N_G == 1:   # one block: both bodies coincide, use one formula
        vals = np.abs(A_G[:, :K].T @ U)
    else:
        W = (A_G.T @ U).reshape(N_G, K, -1)
        vals = np.sqrt(np.einsum("gkm,gkm->km", W, W))
    idx = np.argmax(vals, axis=0)
    return vals[idx, np.arange(U.shape[1])], idx


def _batch_grad(A_G, U, idx, K, N_G, ssc):
    if ssc or N_G == 1:
        cols = A_G[:, idx]
        return cols * np.sign(np.einsum("dm,dm->m", cols, U))
    G = np.empty_like(U)
    for j, k in enumerate(idx):
        B = A_G[:, k::K][:, :N_G]           # d x N_G block of row k
        w = B.T @ U[:, j]
        nw = np.linalg.norm(w)
        G[:, j] = B @ (w / nw) if nw > 0 else 0.0
    return G


def _refine(A_G, U, K, N_G, ssc, steps, step0=0.2, step_end=1e-4):
    """Projected subgradient descent on the sphere from each column of ``U``."""
    vals, idx = _batch_h(A_G, U, K, N_G, ssc)
    best_val, best_U = vals.copy(), U.copy()
    for t in range(steps):
        alpha = step0 * (step_end / step0) ** (t / max(steps - 1, 1))
        G = _batch_grad(A_G, U, idx, K, N_G, ssc)
        G -= U * np.einsum("dm,dm->m", G, U)   # tangent component
        gn = np.linalg.norm(G, axis=0)
        moving = gn > 0
        if not moving.any():
            break
        U = U.copy()
        U[:, moving] -= alpha * G[:, moving] / gn[moving]
        U /= np.linalg.norm(U, axis=0)
        vals, idx = _batch_h(A_G, U, K, N_G, ssc)
        better = vals < best_val
        best_val[better] = vals[better]
        best_U[:, better] = U[:, better]
    j = int(np.argmin(best_val))
    return best_val[j], best_U[:, j]


def _directions(d, num, seed):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((d, num))
    return U / np.linalg.norm(U, axis=0)


def _estimate(A_G, K, N_G, ssc, U, descent_steps, keep):
    vals, _ = _batch_h(A_G, U, K, N_G, ssc)
    order = np.argsort(vals, kind="stable")[:keep]
    best, u = _refine(A_G, U[:, order], K, N_G, ssc, descent_steps)
    j = int(np.argmin(vals))
    if vals[j] < best:
        best, u = vals[j], U[:, j]
    return best, u


def estimate_inradius(A_G, num_directions: int = 2000, descent_steps: int = 100, seed=None,
                      *, N_G: int = 1, keep: int = 10, ssc: bool = False) -> InradiusEstimate:
    """Estimate ``r(P°) = min_{|u|=1} h(u)``; ``R_hat(P) = 1 / r_hat``.

    Samples ``num_directions`` uniform directions, refines the ``keep``
    smallest by projected subgradient descent and returns the smallest value
    seen, so the estimate never falls below the true in-radius.
    ``ssc=True`` estimates the SSC body instead, via
    :func:`estimate_inradius_pair`, so that with equal seeds the SSC value
    never exceeds the group value.
    """
    if ssc:
        return estimate_inradius_pair(A_G, num_directions, descent_steps, seed,
                                      N_G=N_G, keep=keep)[1]
    A_G, K = _layout(A_G, N_G)
    if not np.any(A_G):
        raise ValueError("zero dictionary has no in-radius")
    U = _directions(A_G.shape[0], num_directions, seed)
    best, u = _estimate(A_G, K, N_G, False, U, descent_steps, keep)
    return InradiusEstimate.of(best, u)


def estimate_inradius_pair(A_G, num_directions: int = 2000, descent_steps: int = 100,
                           seed=None, *, N_G: int = 1, keep: int = 10):
    """Group and SSC in-radius estimates from one shared direction sample.

    The SSC estimate is additionally evaluated at the group minimizer; since
    ``h_ssc <= h`` pointwise this guarantees ``r_hat >= r_hat_ssc``.
    """
    A_G, K = _layout(A_G, N_G)
    if not np.any(A_G):
        raise ValueError("zero dictionary has no in-radius")
    U = _directions(A_G.shape[0], num_directions, seed)
    r, u = _estimate(A_G, K, N_G, False, U, descent_steps, keep)
    if N_G == 1:
        est = InradiusEstimate.of(r, u)
        return est, est
    r_ssc, u_ssc = _estimate(A_G, K, N_G, True, U, descent_steps, keep)
    at_u = float(np.max(np.abs(A_G[:, :K].T @ u)))
    if at_u < r_ssc:
        r_ssc, u_ssc = at_u, u
    return InradiusEstimate.of(r, u), InradiusEstimate.of(r_ssc, u_ssc)


# --- bound formulas ---------------------------------------------------------------

def evaluate_C1(params: BoundParams, N_k: int) -> float:
    """``4 (log(N_k + 1) + log Delta + t)``."""
    if N_k < 1:
        raise ValueError("N_k must be >= 1")
    return 4.0 * (math.log(N_k + 1) + math.log(params.Delta) + params.t)


def evaluate_C2(params: BoundParams, N_k: int, N_G: int, include_exp: bool = True) -> float:
    """``4 N_G / ((N_k + 1) Delta^2) * exp(-2t)``.

    ``include_exp=False`` drops the ``exp(-2t)`` factor, for the reading in
    which it is applied only once in the probability bound.
    """
    if N_k < 1:
        raise ValueError("N_k must be >= 1")
    val = 4.0 * N_G / ((N_k + 1) * params.Delta ** 2)
    return val * math.exp(-2.0 * params.t) if include_exp else val


def probability_bound(params: BoundParams, N_k: int, N_G: int, reading: str = "printed") -> float:
    """Lower bound ``1 - C2 exp(-2t)`` on the event probability.

    ``reading="printed"`` uses C2 with its own ``exp(-2t)`` factor (so the
    exponent appears twice, as written); ``reading="single"`` counts it once.
    """
    if reading not in ("printed", "single"):
        raise ValueError("reading must be 'printed' or 'single'")
    c2 = evaluate_C2(params, N_k, N_G, include_exp=(reading == "printed"))
    return 1.0 - c2 * math.exp(-2.0 * params.t)


def ssc_inradius_lower_bound(N_ell: int, d_ell: int, c0: float) -> float:
    """``c0 sqrt(log(N_ell / d_ell) / d_ell)``."""
    if d_ell < 1 or N_ell <= d_ell:
        raise ValueError("need N_ell > d_ell >= 1")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    return c0 * math.sqrt(math.log(N_ell / d_ell) / d_ell)


@dataclass
class PairwiseCondition:
    holds: bool
    margin: float
    lhs: float
    rhs: float
    # rhs is an upper-bound estimate of the in-radius, so "holds" is optimistic
    optimistic: bool = True


def check_pairwise_condition(Qk, Ql, rep: GroupRepresentation, A_G_ell, params: BoundParams,
                             d_k: int | None = None, d_ell: int | None = None, *,
                             N_k: int, **inradius_kw) -> PairwiseCondition:
    """``C1 * affinity / sqrt(d_ell d_k) <= r(P°_ell)``, with an estimated in-radius.

    ``A_G_ell`` is the group dictionary of submodule ``ell`` in its reduced
    coordinates; ``N_k`` is the number of points of submodule ``k``.
    """
    d_k = d_k or _Q(Qk).shape[1]
    d_ell = d_ell or _Q(Ql).shape[1]
    lhs = evaluate_C1(params, N_k) * submodule_affinity(Qk, Ql, rep) / math.sqrt(d_ell * d_k)
    rhs = estimate_inradius(A_G_ell, N_G=rep.order, **inradius_kw).r_hat
    return PairwiseCondition(lhs <= rhs, rhs - lhs, lhs, rhs)


def evaluate_xi(a_j, Qk, Ql, rep: GroupRepresentation, v) -> np.ndarray:
    """``xi_g = a_j^T Qk^T L_g^T v`` for every group element.

    ``v`` is an ambient unit vector (a group-dual direction); a vector of
    length ``d_ell`` is read as reduced coordinates and mapped through ``Ql``.
    """
    Qk, Ql = _Q(Qk), _Q(Ql)
    a_j = np.asarray(a_j, dtype=float)
    v = np.asarray(v, dtype=float)
    if a_j.size != Qk.shape[1]:
        raise ValueError("a_j has the wrong dimension")
    if v.size == Ql.shape[1] and v.size != Qk.shape[0]:
        v = Ql @ v
    if v.size != Qk.shape[0]:
        raise ValueError("v has the wrong dimension")
    x = Qk @ a_j
    return np.array([rep.apply(g, x) @ v for g in range(rep.order)])


def _transfer_blocks(Qk, Ql, rep):
    """``T_g = Qk^T L_g^T Ql`` stacked as (N_G, d_k, d_ell)."""
    return np.stack([rep.apply(g, Qk).T @ Ql for g in range(rep.order)])


def _unit_rows(rng, shape):
    Z = rng.standard_normal(shape)
    return Z / np.linalg.norm(Z, axis=-1, keepdims=True)


@dataclass
class EventFrequency:
    frequency: float
    threshold: float
    bound_printed: float
    bound_single: float
    trials: int
    max_statistic: float


def theorem_event_frequency(Qk, Ql, rep: GroupRepresentation, params: BoundParams,
                            trials: int = 10_000, seed=None, *, N_k: int,
                            batch: int = 2000) -> EventFrequency:
    """Monte Carlo frequency of ``|reshape(X_G^(k)T v)|_{inf,2} <= C1 aff / sqrt(d_l d_k)``.

    The normalized dual direction is drawn uniformly on the sphere of the
    ``l`` submodule and the ``N_k`` points of submodule ``k`` uniformly on
    its sphere, independently per trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    Qk, Ql = _Q(Qk), _Q(Ql)
    d_k, d_l = Qk.shape[1], Ql.shape[1]
    aff = submodule_affinity(Qk, Ql, rep)
    threshold = evaluate_C1(params, N_k) * aff / math.sqrt(d_l * d_k)
    T = _transfer_blocks(Qk, Ql, rep)
    rng = np.random.default_rng(seed)
    hits, worst, done = 0, 0.0, 0
    while done < trials:
        m = min(batch, trials - done)
        lam = _unit_rows(rng, (m, d_l))
        A = _unit_rows(rng, (m, N_k, d_k))
        B = np.einsum("gkl,ml->mkg", T, lam)          # per trial: d_k x N_G
        xi = np.einsum("mjk,mkg->mjg", A, B)          # per point: N_G entries
        stat = np.sqrt((xi ** 2).sum(axis=2)).max(axis=1)
        hits += int(np.sum(stat <= threshold))
        worst = max(worst, float(stat.max()))
        done += m
    return EventFrequency(hits / trials, threshold,
                          probability_bound(params, N_k, rep.order, "printed"),
                          probability_bound(params, N_k, rep.order, "single"),
                          trials, worst)


# --- conjecture probe ---------------------------------------------------------------

@dataclass
class ConjectureFit:
    rows: list                  # dicts: N_G, trial, d, N, r_hat, r_hat_ssc
    slope: float | None         # of log(r_hat / r_hat_ssc) against log N_G
    intercept: float | None
    c0_hat: float               # mean r_hat / (sqrt(N_G) sqrt(log(N/d)/d))
    c0_ssc_hat: float           # mean r_hat_ssc / sqrt(log(N/d)/d)
    dominance_holds: bool

    def to_dict(self):
        return asdict(self)


def has_free_orbits(rep: GroupRepresentation, seed=None, tries: int = 3) -> bool:
    """Whether a random vector's orbit matrix has full rank N_G."""
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        a = rng.standard_normal(rep.n)
        orbit = np.column_stack([rep.apply(g, a) for g in range(rep.order)])
        if np.linalg.matrix_rank(orbit) == rep.order:
            return True
    return False


def conjecture_probe(N_G_values: Sequence[int], beta: int = 2, N_over_d: float = 8.0,
                     trials: int = 5, seed=0, n1: int | None = None,
                     num_directions: int = 2000, descent_steps: int = 100) -> ConjectureFit:
    """In-radius growth with group order for free cyclic-shift submodules.

    For each ``N_G``, shifts of ``n1 x N_G`` images (``n1`` defaults to
    ``2 * beta``), a submodule of dimension ``d = beta * N_G`` from ``beta``
    seeds, and ``N = N_over_d * d`` semi-random points. Purely empirical.
    """
    if beta < 2:
        raise ValueError("beta must be > 1")
    n1 = n1 or 2 * beta
    rows = []
    ss = np.random.SeedSequence(seed)
    for N_G in N_G_values:
        rep = build_cyclic_shift_rep(n1, int(N_G))
        if not has_free_orbits(rep, seed=0):
            raise ValueError(f"N_G={N_G}: random orbits are not free")
        d_target = beta * int(N_G)
        N = int(round(N_over_d * d_target))
        for trial in range(trials):
            child = ss.spawn(1)[0]
            s_basis, s_pts, s_dirs = (int(x) for x in child.generate_state(3))
            basis = generate_submodule_basis(rep, beta, s_basis)
            if basis.dim != d_target:
                raise ValueError(f"N_G={N_G}: submodule has dimension {basis.dim}, "
                                 f"expected {d_target} (orbits not free)")
            ds = sample_semi_random([basis], [N], s_pts)
            A_G = reduced_group_dictionary(basis, ds.X)
            est, est_ssc = estimate_inradius_pair(A_G, num_directions, descent_steps,
                                                  seed=s_dirs, N_G=rep.order)
            rows.append({"N_G": int(N_G), "trial": trial, "d": basis.dim, "N": N,
                         "r_hat": est.r_hat, "r_hat_ssc": est_ssc.r_hat})
    log_ng = np.log([r["N_G"] for r in rows])
    ratio = np.log([r["r_hat"] / r["r_hat_ssc"] for r in rows])
    slope = intercept = None
    if np.unique(log_ng).size >= 2:
        slope, intercept = (float(v) for v in np.polyfit(log_ng, ratio, 1))
    scale = np.array([math.sqrt(math.log(r["N"] / r["d"]) / r["d"]) for r in rows])
    c0_hat = float(np.mean([r["r_hat"] / math.sqrt(r["N_G"]) for r in rows] / scale))
    c0_ssc = float(np.mean([r["r_hat_ssc"] for r in rows] / scale))
    dominance = all(r["r_hat"] >= r["r_hat_ssc"] for r in rows)
    return ConjectureFit(rows, slope, intercept, c0_hat, c0_ssc, dominance)


# --- uniformity of dual directions -----------------------------------------------------

def dual_directions(basis: SubmoduleBasis, X, cfg=None) -> np.ndarray:
    """Normalized dual solutions ``lam_i / |lam_i|`` for each point, reduced coordinates.

    Point ``i`` is represented against the group dictionary of the others,
    all expressed in the coordinates of ``basis``. Rows of the result are
    the directions.
    """
    from .solver import SolverConfig, solve_dual

    cfg = cfg or SolverConfig()
    A = basis.Q.T @ np.asarray(X, dtype=float)
    N = A.shape[1]
    out = np.zeros((N, A.shape[0]))
    for i in range(N):
        others = np.delete(A, i, axis=1)
        A_G = np.hstack([basis.Q.T @ basis.rep.apply(g, basis.Q @ others)
                         for g in range(basis.rep.order)])
        lam, _, _ = solve_dual(A[:, i], A_G, cfg, K=N - 1, N_G=basis.rep.order)
        out[i] = lam / np.linalg.norm(lam)
    return out


def mean_direction_norm(directions) -> float:
    """Norm of the mean of unit row vectors; about ``1/sqrt(N)`` when uniform."""
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    return float(np.linalg.norm(D.mean(axis=0)))


# --- report ---------------------------------------------------------------------

@dataclass
class GeometryReport:
    affinity_matrix: list
    subspace_affinity_matrix: list
    inradius_estimates: list
    ssc_inradius_estimates: list
    c1_values: list
    c2_values: list
    condition_flags: list
    condition_margins: list
    conjecture_fit: dict | None = None
    event_frequencies: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def geometry_report(bases: Sequence[SubmoduleBasis], X, labels, params: BoundParams,
                    seed=0, points_per_submodule: int = 1, num_directions: int = 2000,
                    descent_steps: int = 100) -> GeometryReport:
    """Affinities, in-radii, bound values and pairwise conditions for a dataset.

    In-radii are estimated for the first ``points_per_submodule`` points of
    each submodule against the group dictionary of the remaining points.
    """
    L = len(bases)
    rep = bases[0].rep
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    aff = [[submodule_affinity(bases[k], bases[l], rep) for l in range(L)] for k in range(L)]
    saff = [[subspace_affinity(bases[k], bases[l]) for l in range(L)] for k in range(L)]
    counts = [int(np.sum(labels == l)) for l in range(L)]
    rin, rin_ssc = [], []
    rng = np.random.default_rng(seed)
    for l, b in enumerate(bases):
        idx = np.flatnonzero(labels == l)
        mine, mine_ssc = [], []
        for i in idx[:points_per_submodule]:
            others = np.delete(X[:, idx], np.flatnonzero(idx == i), axis=1)
            if others.shape[1] == 0:
                continue
            A_G = reduced_group_dictionary(b, others)
            est, est_ssc = estimate_inradius_pair(A_G, num_directions, descent_steps,
                                                  seed=int(rng.integers(2**32)),
                                                  N_G=rep.order)
            mine.append(est.r_hat)
            mine_ssc.append(est_ssc.r_hat)
        rin.append(mine)
        rin_ssc.append(mine_ssc)
    c1 = [evaluate_C1(params, counts[k]) for k in range(L)]
    c2 = [evaluate_C2(params, counts[k], rep.order) for k in range(L)]
    flags, margins = [], []
    for k in range(L):
        frow, mrow = [], []
        for l in range(L):
            if k == l or not rin[l]:
                frow.append(None)
                mrow.append(None)
                continue
            lhs = c1[k] * aff[k][l] / math.sqrt(bases[k].dim * bases[l].dim)
            rhs = min(rin[l])
            frow.append(bool(lhs <= rhs))
            mrow.append(rhs - lhs)
        flags.append(frow)
        margins.append(mrow)
    notes = ["in-radius values are upper-bound estimates; condition flags are optimistic"]
    return GeometryReport(aff, saff, rin, rin_ssc, c1, c2, flags, margins, notes=notes)
