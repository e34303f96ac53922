"""Finite abelian group representations and group-orbit dictionaries.

Group elements are documented 1-based (element 1 is the identity) but stored
0-based: ``rep.matrices[0]`` is ``L_1 = I``.

Images are vectorized column-major, so pixel ``(r, c)`` of an ``n1 x n2``
image sits at index ``r + n1 * c``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_REL_TOL = 1e-10


class RepresentationError(ValueError):
    """Raised when matrices do not form a valid abelian representation."""


@dataclass(frozen=True, eq=False)
class GroupRepresentation:
    """An abelian group acting on R^n through explicit n x n matrices.

    Parameters
    ----------
    matrices : ndarray, shape (N_G, n, n)
        ``matrices[g]`` is ``L_{g+1}``; ``matrices[0]`` must be the identity.
    perms : ndarray of int, shape (N_G, n), optional
        Index maps with ``(L_g x)[i] = x[perms[g, i]]``. Only set for
        permutation representations; used as a fast path.
    descriptor : dict, optional
        JSON descriptor this representation was built from.
    """

    matrices: np.ndarray
    perms: np.ndarray | None = None
    descriptor: dict | None = field(default=None, compare=False)
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
            raise RepresentationError("matrices must have shape (N_G, n, n)")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        if self.perms is not None:
            perms = np.asarray(self.perms, dtype=np.intp)
            perms.setflags(write=False)
            object.__setattr__(self, "perms", perms)
        if self.validate:
            self._check()

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    @property
    def order(self) -> int:
        return self.matrices.shape[0]

    def __len__(self):
        return self.order

    def _check(self):
        n, mats = self.n, self.matrices
        tol = _REL_TOL * n
        if not np.array_equal(mats[0], np.eye(n)):
            raise RepresentationError("matrices[0] must be exactly the identity")
        flat = mats.reshape(self.order, -1)
        for g in range(self.order):
            prods = np.einsum("ij,hjk->hik", mats[g], mats)
            comm = np.einsum("hij,jk->hik", mats, mats[g])
            if np.max(np.linalg.norm((prods - comm).reshape(self.order, -1), axis=1)) > tol:
                raise RepresentationError(f"element {g + 1} does not commute with the group")
            for h in range(self.order):
                dist = np.linalg.norm(flat - prods[h].ravel(), axis=1)
                if dist.min() > tol:
                    raise RepresentationError(
                        f"product of elements {g + 1} and {h + 1} is not in the group")
        if self.perms is not None:
            gram = np.einsum("gji,gjk->gik", mats, mats) - np.eye(n)
            if np.max(np.linalg.norm(gram.reshape(self.order, -1), axis=1)) > tol:
                raise RepresentationError("permutation matrices are not orthogonal")

    def apply(self, g: int, X: np.ndarray) -> np.ndarray:
        """Return ``L_{g+1} @ X`` (``g`` is a 0-based element offset)."""
        X = np.asarray(X, dtype=float)
        if self.perms is not None:
            return X[self.perms[g]]
        return self.matrices[g] @ X

    def is_orthogonal(self, tol: float | None = None) -> bool:
        tol = _REL_TOL * self.n if tol is None else tol
        gram = np.einsum("gji,gjk->gik", self.matrices, self.matrices) - np.eye(self.n)
        return bool(np.max(np.linalg.norm(gram.reshape(self.order, -1), axis=1)) <= tol)

    def to_descriptor(self) -> dict:
        """JSON-serializable descriptor; explicit matrices if none was recorded."""
        if self.descriptor is not None:
            return dict(self.descriptor)
        return {"kind": "explicit", "n": self.n,
                "matrices": [m.tolist() for m in self.matrices]}


def _perm_matrices(perms: np.ndarray) -> np.ndarray:
    N_G, n = perms.shape
    mats = np.zeros((N_G, n, n))
    rows = np.arange(n)
    for g in range(N_G):
        mats[g, rows, perms[g]] = 1.0
    return mats


def trivial_rep(n: int) -> GroupRepresentation:
    """The one-element group {I}; SSmC with this group is plain SSC."""
    if n < 1:
        raise RepresentationError("n must be positive")
    perms = np.arange(n)[None, :]
    return GroupRepresentation(_perm_matrices(perms), perms=perms,
                               descriptor={"kind": "trivial", "n": n})


def build_cyclic_shift_rep(n1: int, n2: int, axis: int = 1) -> GroupRepresentation:
    """Cyclic shifts of column-major vectorized ``n1 x n2`` images.

    With ``axis=1`` (the default) element ``g`` (0-based) shifts image
    columns by ``g`` positions, i.e. ``L = C^g kron I_{n1}`` and the order is
    ``n2``. ``axis=0`` shifts rows instead (order ``n1``).
    """
    if n1 < 1 or n2 < 1:
        raise RepresentationError("image dimensions must be positive")
    if axis not in (0, 1):
        raise RepresentationError("axis must be 0 or 1")
    r, c = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    r = r.ravel(order="F")
    c = c.ravel(order="F")
    order = n2 if axis == 1 else n1
    perms = np.empty((order, n1 * n2), dtype=np.intp)
    for g in range(order):
        if axis == 1:
            perms[g] = r + n1 * ((c - g) % n2)
        else:
            perms[g] = (r - g) % n1 + n1 * c
    desc = {"kind": "cyclic_shift", "n1": n1, "n2": n2}
    if axis != 1:
        desc["axis"] = axis
    return GroupRepresentation(_perm_matrices(perms), perms=perms, descriptor=desc)


def _dedup_indices(mats: np.ndarray, tol: float) -> list[int]:
    keep: list[int] = []
    flat = mats.reshape(mats.shape[0], -1)
    for i in range(len(flat)):
        if not any(np.linalg.norm(flat[i] - flat[j]) <= tol for j in keep):
            keep.append(i)
    return keep


def direct_product(a: GroupRepresentation, b: GroupRepresentation,
                   dedup: bool = False) -> GroupRepresentation:
    """All products ``A_g B_h`` ordered with ``g`` outer and ``h`` inner.

    Products of non-coprime cyclic groups repeat elements; ``dedup=True``
    drops repeats (Frobenius distance within ``1e-10 * n``), keeping first
    occurrences.
    """
    if a.n != b.n:
        raise RepresentationError(f"dimension mismatch: {a.n} != {b.n}")
    tol = _REL_TOL * a.n
    for A in a.matrices:
        comm = np.einsum("ij,hjk->hik", A, b.matrices) - np.einsum("hij,jk->hik", b.matrices, A)
        if np.max(np.linalg.norm(comm.reshape(b.order, -1), axis=1)) > tol:
            raise RepresentationError("factor representations do not commute")
    mats = np.einsum("gij,hjk->ghik", a.matrices, b.matrices).reshape(-1, a.n, a.n)
    perms = None
    if a.perms is not None and b.perms is not None:
        # (A_g B_h x)[i] = x[pb[h][pa[g][i]]]
        perms = np.stack([b.perms[h][a.perms[g]]
                          for g in range(a.order) for h in range(b.order)])
    if dedup:
        keep = _dedup_indices(mats, tol)
        mats = mats[keep]
        perms = perms[keep] if perms is not None else None
    desc = None
    if a.descriptor is not None and b.descriptor is not None:
        desc = {"kind": "product", "factors": [a.descriptor, b.descriptor], "dedup": dedup}
    # validate=False: a non-dedup'd product has repeated elements but is still
    # closed and commutative; the factors were validated on construction.
    rep = GroupRepresentation(mats, perms=perms, descriptor=desc, validate=dedup)
    return rep


def rep_from_descriptor(desc: dict) -> GroupRepresentation:
    """Build a representation from its JSON descriptor."""
    kind = desc.get("kind")
    if kind == "cyclic_shift":
        return build_cyclic_shift_rep(int(desc["n1"]), int(desc["n2"]), int(desc.get("axis", 1)))
    if kind == "trivial":
        return trivial_rep(int(desc["n"]))
    if kind == "product":
        factors = [rep_from_descriptor(f) for f in desc["factors"]]
        if not factors:
            raise RepresentationError("product needs at least one factor")
        rep = factors[0]
        for f in factors[1:]:
            rep = direct_product(rep, f, dedup=bool(desc.get("dedup", False)))
        return rep
    if kind == "explicit":
        mats = np.asarray(desc["matrices"], dtype=float)
        rep = GroupRepresentation(mats, descriptor=None)
        object.__setattr__(rep, "descriptor", {"kind": "explicit", "n": rep.n,
                                               "matrices": mats.tolist()})
        return rep
    raise RepresentationError(f"unknown representation kind: {kind!r}")


# --- group-matrix layout -----------------------------------------------------

def reshape_group(v, K: int, N_G: int) -> np.ndarray:
    """View a flat length ``K*N_G`` vector as the ``K x N_G`` group matrix.

    Column ``j`` holds entries ``j*K .. (j+1)*K - 1`` of ``v``.
    """
    v = np.asarray(v)
    if v.ndim != 1 or v.size != K * N_G:
        raise ValueError(f"expected a flat vector of length {K * N_G}, got shape {v.shape}")
    return v.reshape((K, N_G), order="F")


def flatten_group(M) -> np.ndarray:
    """Inverse of :func:`reshape_group`."""
    return np.asarray(M).ravel(order="F")


def row_norms(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(M.shape[0] if M.ndim == 2 else 0)
    return np.sqrt(np.einsum("ij,ij->i", M, M))


def norm_1_2(M) -> float:
    """Sum of the l2 norms of the rows."""
    return float(np.sum(row_norms(M)))


def norm_inf_2(M) -> float:
    """Largest l2 norm of a row (0 for an empty matrix)."""
    r = row_norms(M)
    return float(r.max()) if r.size else 0.0


# --- dictionaries -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroupDictionary:
    """``expanded = [L_1 base, L_2 base, ..., L_{N_G} base]``."""

    base: np.ndarray
    rep: GroupRepresentation
    expanded: np.ndarray

    @property
    def K(self) -> int:
        return self.base.shape[1]

    @property
    def N_G(self) -> int:
        return self.rep.order

    @property
    def n(self) -> int:
        return self.base.shape[0]


def expand(base: np.ndarray, rep: GroupRepresentation) -> np.ndarray:
    base = np.asarray(base, dtype=float)
    if base.shape[0] != rep.n:
        raise ValueError(f"data dimension {base.shape[0]} does not match representation n={rep.n}")
    return np.hstack([rep.apply(g, base) for g in range(rep.order)])


def build_group_dictionary(X, rep: GroupRepresentation,
                           exclude: int | None = None) -> GroupDictionary:
    """Group-orbit dictionary of the columns of ``X``.

    ``exclude`` is a 0-based column index removed before expansion (the
    ``X_{-i,G}`` construction).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    if exclude is not None:
        if not 0 <= exclude < X.shape[1]:
            raise IndexError(f"column index {exclude} out of range for {X.shape[1]} columns")
        base = np.delete(X, exclude, axis=1)
    else:
        base = X.copy()
    expanded = expand(base, rep)
    base.setflags(write=False)
    expanded.setflags(write=False)
    return GroupDictionary(base, rep, expanded)


def select_group_columns(M, K: int, N_G: int, S: Iterable[int]) -> np.ndarray:
    """Keep base indices ``S`` (0-based) inside every group block.

    ``M`` is either an ``n x K*N_G`` matrix or a flat length ``K*N_G``
    vector; the result has ``|S| * N_G`` columns (entries).
    """
    M = np.asarray(M)
    S = np.asarray(sorted(S) if not isinstance(S, np.ndarray) else S, dtype=np.intp)
    if S.size and (S.min() < 0 or S.max() >= K):
        raise IndexError(f"index set out of range for K={K}")
    if M.ndim == 1:
        return reshape_group(M, K, N_G)[S, :].ravel(order="F")
    if M.shape[1] != K * N_G:
        raise ValueError(f"expected {K * N_G} columns, got {M.shape[1]}")
    cube = M.reshape(M.shape[0], N_G, K)
    return cube[:, :, S].reshape(M.shape[0], -1)


def complement(S: Sequence[int], K: int) -> np.ndarray:
    mask = np.ones(K, dtype=bool)
    mask[np.asarray(list(S), dtype=np.intp)] = False
    return np.flatnonzero(mask)
