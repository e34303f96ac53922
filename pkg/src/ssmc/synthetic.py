"""Synthetic unions of G-invariant subspaces.

A submodule basis is built as the orthonormalized span of the group orbits
of a few seed vectors; the span of a union of orbits is invariant by
construction. Its dimension is detected (numerical rank), not prescribed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .group_algebra import GroupRepresentation, expand

RANK_TOL = 1e-10
_MAX_DRAWS = 10


@dataclass(frozen=True, eq=False)
class SubmoduleBasis:
    """Orthonormal basis ``Q`` (n x d) of a G-invariant subspace."""

    Q: np.ndarray
    rep: GroupRepresentation
    seeds: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    def invariance_residual(self) -> float:
        """Largest column residual of ``(I - QQ^T) L_g Q`` over all g."""
        worst = 0.0
        for g in range(self.rep.order):
            LQ = self.rep.apply(g, self.Q)
            R = LQ - self.Q @ (self.Q.T @ LQ)
            worst = max(worst, float(np.max(np.linalg.norm(R, axis=0))) if R.size else 0.0)
        return worst

    def validate(self):
        d = self.dim
        if np.linalg.norm(self.Q.T @ self.Q - np.eye(d)) > 1e-10 * max(d, 1):
            raise ValueError("basis columns are not orthonormal")
        if self.invariance_residual() > 1e-8 * max(d, 1):
            raise ValueError("basis does not span a G-invariant subspace")
        return self


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    X: np.ndarray
    labels: np.ndarray
    bases: list
    coefficients: list
    seed: int | None
    shifts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def counts(self) -> list[int]:
        return [a.shape[1] for a in self.coefficients]


def orbit_basis(rep: GroupRepresentation, seeds: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``span{L_g u : g, u in columns of seeds}``."""
    orbit = expand(np.atleast_2d(np.asarray(seeds, dtype=float).T).T, rep)
    U, s, _ = np.linalg.svd(orbit, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("seed orbit is zero")
    return U[:, s > RANK_TOL * s[0]]


def generate_submodule_basis(rep: GroupRepresentation, num_seeds: int, rng_seed=None, *,
                             support: Sequence[int] | None = None,
                             seeds: np.ndarray | None = None) -> SubmoduleBasis:
    """Draw ``num_seeds`` Gaussian seeds and return the basis of their orbit span.

    ``support`` restricts the seeds to a set of coordinates (0-based); when
    that set is itself invariant (e.g. whole image rows under column shifts)
    the resulting submodules for disjoint supports are mutually orthogonal.
    ``seeds`` bypasses the draw.
    """
    if seeds is None:
        if num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")
        rng = np.random.default_rng(rng_seed)
        mask = np.zeros(rep.n, dtype=bool)
        mask[np.arange(rep.n) if support is None else np.asarray(support, dtype=np.intp)] = True
        seeds = np.zeros((rep.n, num_seeds))
        for j in range(num_seeds):
            for _ in range(_MAX_DRAWS):
                col = np.where(mask, rng.standard_normal(rep.n), 0.0)
                if np.any(col):
                    break
            else:
                raise RuntimeError("random seed vector was zero in 10 consecutive draws")
            seeds[:, j] = col
    seeds = np.asarray(seeds, dtype=float).reshape(rep.n, -1)
    Q = orbit_basis(rep, seeds)
    return SubmoduleBasis(Q, rep, seeds).validate()


def correlated_seeds(n: int, num_submodules: int, num_seeds: int, specific_weight: float,
                     rng_seed=None) -> list[np.ndarray]:
    """Seed matrices ``common + specific_weight * own`` sharing one common part.

    Models template families that look alike across clusters (faces of
    different subjects), where a shift of the input changes the coordinates
    more than a change of cluster does.
    """
    rng = np.random.default_rng(rng_seed)
    common = rng.standard_normal((n, num_seeds))
    return [common + specific_weight * rng.standard_normal((n, num_seeds))
            for _ in range(num_submodules)]


def _unit_columns(rng, d, N):
    A = rng.standard_normal((d, N))
    nrm = np.linalg.norm(A, axis=0)
    while np.any(nrm == 0.0):  # measure-zero, but keep the unit-norm contract
        bad = nrm == 0.0
        A[:, bad] = rng.standard_normal((d, int(bad.sum())))
        nrm = np.linalg.norm(A, axis=0)
    return A / nrm


def sample_semi_random(bases: Sequence[SubmoduleBasis], counts: Sequence[int],
                       rng_seed=None) -> SyntheticDataset:
    """``X^l = Q^l A^l`` with the columns of ``A^l`` uniform on the unit sphere."""
    if not bases:
        raise ValueError("need at least one basis")
    if len(counts) != len(bases):
        raise ValueError("counts must align with bases")
    if any(c < 1 for c in counts):
        raise ValueError("every submodule needs at least one point")
    rng = np.random.default_rng(rng_seed)
    coeffs = [_unit_columns(rng, b.dim, int(c)) for b, c in zip(bases, counts)]
    X = np.hstack([b.Q @ A for b, A in zip(bases, coeffs)])
    labels = np.repeat(np.arange(len(bases)), counts)
    return SyntheticDataset(X, labels, list(bases), coeffs, rng_seed,
                            meta={"model": "semi_random"})


def sample_orbit_model(bases: Sequence[SubmoduleBasis], counts: Sequence[int], rng_seed=None,
                       *, scramble: bool = False) -> SyntheticDataset:
    """Points drawn from each basis' seed span, optionally moved by a random group element.

    Without scrambling every point is ``S a`` with ``S`` an orthonormal basis
    of the seed span and ``a`` uniform on the sphere; with ``scramble`` each
    point is then replaced by ``L_g`` of itself for an independent uniform
    ``g``. Both stay inside the submodule, so labels are unchanged.
    """
    if not bases:
        raise ValueError("need at least one basis")
    if len(counts) != len(bases):
        raise ValueError("counts must align with bases")
    rng = np.random.default_rng(rng_seed)
    cols, coeffs, shifts = [], [], []
    for b, N in zip(bases, counts):
        if b.seeds is None:
            raise ValueError("orbit model needs bases that carry their seeds")
        S, _ = np.linalg.qr(b.seeds)
        A = _unit_columns(rng, S.shape[1], int(N))
        Xl = S @ A
        g = rng.integers(0, b.rep.order, size=int(N)) if scramble else np.zeros(int(N), int)
        Xl = np.column_stack([b.rep.apply(gi, Xl[:, j]) for j, gi in enumerate(g)])
        cols.append(Xl)
        coeffs.append(b.Q.T @ Xl)
        shifts.append(g)
    labels = np.repeat(np.arange(len(bases)), counts)
    return SyntheticDataset(np.hstack(cols), labels, list(bases), coeffs, rng_seed,
                            shifts=np.concatenate(shifts),
                            meta={"model": "orbit", "scramble": bool(scramble)})


def perturb_dataset(ds: SyntheticDataset, noise_sigma: float, rng_seed=None) -> SyntheticDataset:
    """Add i.i.d. N(0, sigma^2) noise to every entry of ``X``."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if noise_sigma == 0:
        return ds
    rng = np.random.default_rng(rng_seed)
    X = ds.X + noise_sigma * rng.standard_normal(ds.X.shape)
    return replace(ds, X=X, meta={**ds.meta, "noise_sigma": noise_sigma})


# --- on-disk format -------------------------------------------------------------

def save_dataset(ds: SyntheticDataset, directory, extra_meta: dict | None = None) -> Path:
    """Write ``data.csv`` (n x N), ``labels.csv`` and ``meta.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "data.csv", ds.X, delimiter=",", fmt="%.17e")
    np.savetxt(out / "labels.csv", ds.labels[None, :], delimiter=",", fmt="%d")
    rep = ds.bases[0].rep if ds.bases else None
    meta = {
        "seed": ds.seed,
        "n": int(ds.X.shape[0]),
        "N": int(ds.X.shape[1]),
        "dims": [b.dim for b in ds.bases],
        "counts": ds.counts,
        "group": rep.to_descriptor() if rep is not None else None,
        **ds.meta,
        **(extra_meta or {}),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_dataset(directory):
    """Read a directory written by :func:`save_dataset`; returns ``(X, labels, meta)``."""
    src = Path(directory)
    X = np.loadtxt(src / "data.csv", delimiter=",", ndmin=2)
    labels = np.loadtxt(src / "labels.csv", delimiter=",", dtype=int, ndmin=1)
    meta = json.loads((src / "meta.json").read_text())
    return X, labels, meta
