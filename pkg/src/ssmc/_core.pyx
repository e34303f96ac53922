# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the group-sparse splitting solver.

Mirrors ``_fallback.py`` exactly; the matrix-vector products go through
BLAS dgemv and the whole iteration runs without the GIL.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

PROX_SHRINK = 0
PROX_BALL = 1


cdef inline void _row_norms(const double* v, int K, int NG, double* out) noexcept nogil:
    cdef int k, g
    cdef double acc, e
    for k in range(K):
        acc = 0.0
        for g in range(NG):
            e = v[g * K + k]
            acc += e * e
        out[k] = sqrt(acc)


cdef inline void _shrink(const double* q, double* z, double* nrm, int K, int NG,
                         double tau) noexcept nogil:
    cdef int k, g
    cdef double s
    _row_norms(q, K, NG, nrm)
    for k in range(K):
        if nrm[k] > tau:
            s = 1.0 - tau / nrm[k]
        else:
            s = 0.0
        for g in range(NG):
            z[g * K + k] = q[g * K + k] * s


cdef inline void _ball(const double* q, double* z, double* nrm, int K, int NG) noexcept nogil:
    cdef int k, g
    cdef double s
    _row_norms(q, K, NG, nrm)
    for k in range(K):
        s = 1.0 / nrm[k] if nrm[k] > 1.0 else 1.0
        for g in range(NG):
            z[g * K + k] = q[g * K + k] * s


def group_row_norms(v, int K, int NG):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    if vv.shape[0] != K * NG:
        raise ValueError("length mismatch")
    out = np.empty(K)
    cdef double[::1] o = out
    if K > 0:
        _row_norms(&vv[0], K, NG, &o[0])
    return out


def block_shrink(v, int K, int NG, double tau, out=None):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    if vv.shape[0] != K * NG:
        raise ValueError("length mismatch")
    if out is None:
        out = np.empty(K * NG)
    cdef double[::1] o = out
    cdef double[::1] nrm = np.empty(max(K, 1))
    if K > 0 and NG > 0:
        _shrink(&vv[0], &o[0], &nrm[0], K, NG, tau)
    return out


def admm_chunk(const double[:, ::1] Vt, const double[::1] p, const double[::1] D,
               double alpha, int prox, double tau, double relax,
               double[::1] z, double[::1] u, double[::1] x,
               int K, int NG, int iters, double eps_pri, double eps_dual,
               double rho, double[:, ::1] hist=None):
    cdef int r = Vt.shape[0]
    cdef int m = Vt.shape[1]
    cdef int it, j, ran = 0
    cdef int inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef double r_acc, s_acc, d, obj
    cdef double r_norm = INFINITY, s_norm = INFINITY
    cdef bint record = hist is not None
    cdef char trans_t = b'T'
    cdef char trans_n = b'N'
    if m != K * NG or z.shape[0] != m or u.shape[0] != m or x.shape[0] != m:
        raise ValueError("state length mismatch")
    if p.shape[0] != r or D.shape[0] != r:
        raise ValueError("reduced-coordinate length mismatch")
    if record and hist.shape[0] < iters:
        raise ValueError("history buffer too short")

    cdef double[::1] v = np.empty(m)
    cdef double[::1] q = np.empty(m)
    cdef double[::1] zold = np.empty(m)
    cdef double[::1] t = np.empty(max(r, 1))
    cdef double[::1] nrm = np.empty(max(K, 1))

    with nogil:
        for it in range(iters):
            for j in range(m):
                v[j] = z[j] - u[j]
                zold[j] = z[j]
            if r > 0:
                # Vt is C-ordered (r, m) == Fortran (m, r) matrix A; t = A^T v
                dgemv(&trans_t, &m, &r, &one, <double*>&Vt[0, 0], &m, &v[0], &inc, &zero, &t[0], &inc)
                for j in range(r):
                    t[j] = p[j] + D[j] * t[j]
                for j in range(m):
                    x[j] = alpha * v[j]
                dgemv(&trans_n, &m, &r, &one, <double*>&Vt[0, 0], &m, &t[0], &inc, &one, &x[0], &inc)
            else:
                for j in range(m):
                    x[j] = alpha * v[j]
            for j in range(m):
                x[j] = relax * x[j] + (1.0 - relax) * zold[j]
                q[j] = x[j] + u[j]
            if prox == 0:
                _shrink(&q[0], &z[0], &nrm[0], K, NG, tau)
            else:
                _ball(&q[0], &z[0], &nrm[0], K, NG)
            r_acc = 0.0
            s_acc = 0.0
            for j in range(m):
                d = x[j] - z[j]
                u[j] += d
                r_acc += d * d
                d = z[j] - zold[j]
                s_acc += d * d
            r_norm = sqrt(r_acc)
            s_norm = rho * sqrt(s_acc)
            ran = it + 1
            if record:
                _row_norms(&z[0], K, NG, &nrm[0])
                obj = 0.0
                for j in range(K):
                    obj += nrm[j]
                hist[it, 0] = r_norm
                hist[it, 1] = s_norm
                hist[it, 2] = obj
            if r_norm <= eps_pri and s_norm <= eps_dual:
                break
    return ran, r_norm, s_norm
