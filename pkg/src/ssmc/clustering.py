"""Affinity construction, spectral clustering and clustering error.

Labels and cluster indices are 0-based throughout.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .group_algebra import GroupRepresentation, build_group_dictionary
from .solver import InfeasibleError, SolverConfig, solve

log = logging.getLogger(__name__)


class AffinityError(RuntimeError):
    """Every per-point program failed."""


@dataclass
class AffinityMatrix:
    C: np.ndarray
    W: np.ndarray
    failed: np.ndarray       # per column: exact program infeasible
    converged: np.ndarray    # per column: solver met its tolerances

    @property
    def num_failed(self) -> int:
        return int(self.failed.sum())


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    num_clusters: int
    seed: int | None
    error_rate: float | None = None


def _column(X, i, rep, cfg, trace):
    D = build_group_dictionary(X, rep, exclude=i)
    if trace is not None:
        sink = trace
        trace = lambda rec: sink({"column": i, **rec})  # noqa: E731
    try:
        res = solve(X[:, i], D, cfg, trace=trace)
    except InfeasibleError:
        return None, False
    norms = kernels.group_row_norms(res.c, D.K, D.N_G)
    return np.insert(norms, i, 0.0), res.converged


def build_affinity(X, rep: GroupRepresentation, cfg: SolverConfig | None = None, *,
                   n_jobs: int = 1, trace=None) -> AffinityMatrix:
    """Self-representation affinity ``W = |C| + |C|^T``.

    Column ``i`` of ``C`` holds the row norms of ``reshape(c_i)`` for the
    program of point ``i`` against ``X_{-i,G}``, with 0 at position ``i``.
    Infeasible exact programs leave a zero column and are flagged; if every
    column fails :class:`AffinityError` is raised.
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    if N < 2:
        raise ValueError("need at least two points")
    cfg = cfg or SolverConfig()
    C = np.zeros((N, N))
    failed = np.zeros(N, dtype=bool)
    converged = np.zeros(N, dtype=bool)

    def work(i):
        return i, _column(X, i, rep, cfg, trace)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, range(N)))
    else:
        results = [work(i) for i in range(N)]
    for i, (col, ok) in results:
        if col is None:
            failed[i] = True
        else:
            C[:, i] = col
            converged[i] = ok
    if failed.all():
        raise AffinityError("every per-point program was infeasible")
    if failed.any():
        log.warning("%d of %d points have no exact self-representation", failed.sum(), N)
    if not converged[~failed].all():
        log.warning("%d solves did not converge", int((~converged[~failed]).sum()))
    W = np.abs(C) + np.abs(C).T
    return AffinityMatrix(C, W, failed, converged)


def _kmeans_once(Y, L, rng, max_iter=300):
    N = Y.shape[0]
    centers = np.empty((L, Y.shape[1]))
    centers[0] = Y[rng.integers(N)]
    d2 = np.sum((Y - centers[0]) ** 2, axis=1)
    for k in range(1, L):
        centers[k] = Y[int(np.argmax(d2))]
        d2 = np.minimum(d2, np.sum((Y - centers[k]) ** 2, axis=1))
    labels = None
    for _ in range(max_iter):
        dist = ((Y[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(L):
            members = Y[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    inertia = float(((Y - centers[labels]) ** 2).sum())
    return labels, inertia


def kmeans(Y, L: int, seed=None, restarts: int = 20):
    """Lloyd's algorithm with farthest-point seeding; best of ``restarts``."""
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _kmeans_once(Y, L, rng)
        if inertia < best_inertia - 1e-12:
            best, best_inertia = labels, inertia
    return best


def spectral_embedding(W, L: int) -> np.ndarray:
    """Bottom ``L`` eigenvectors of the normalized Laplacian, rows normalized."""
    W = np.asarray(W, dtype=float)
    deg = W.sum(axis=1)
    dinv = np.zeros_like(deg)
    pos = deg > 0
    dinv[pos] = 1.0 / np.sqrt(deg[pos])
    # isolated nodes keep an identity row
    Lsym = np.eye(len(W)) - dinv[:, None] * W * dinv[None, :]
    Lsym = 0.5 * (Lsym + Lsym.T)
    _, vecs = np.linalg.eigh(Lsym)
    V = vecs[:, :L]
    nrm = np.linalg.norm(V, axis=1, keepdims=True)
    return np.divide(V, nrm, out=np.zeros_like(V), where=nrm > 0)


def spectral_cluster(W, L: int, seed=None, restarts: int = 20) -> ClusteringResult:
    """Normalized spectral clustering of a symmetric nonnegative affinity."""
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    if W.shape != (N, N):
        raise ValueError("W must be square")
    if L < 1 or L > N:
        raise ValueError(f"cluster count {L} outside [1, {N}]")
    if np.max(np.abs(W - W.T), initial=0.0) > 1e-10:
        raise ValueError("W is not symmetric")
    if np.any(W < 0):
        raise ValueError("W has negative entries")
    if L == 1:
        return ClusteringResult(np.zeros(N, dtype=int), 1, seed)
    Y = spectral_embedding(W, L)
    return ClusteringResult(kmeans(Y, L, seed, restarts), L, seed)


def score_clustering(pred, truth) -> float:
    """Fraction misassigned under the best one-to-one relabeling."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have equal length")
    if pred.size == 0:
        return 0.0
    p_vals, p_idx = np.unique(pred, return_inverse=True)
    t_vals, t_idx = np.unique(truth, return_inverse=True)
    confusion = np.zeros((p_vals.size, t_vals.size))
    np.add.at(confusion, (p_idx, t_idx), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return 1.0 - confusion[rows, cols].sum() / pred.size
