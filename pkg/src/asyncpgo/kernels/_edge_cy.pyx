# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-edge cost/gradient kernels; contract documented in _edge_py."""

from libc.math cimport sqrt, fabs

import numpy as np

cimport numpy as cnp

cnp.import_array()


def edge_cost(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] in_idx,
              double[:, :, ::1] rot, double[:, ::1] trans,
              double[::1] w_rot, double[::1] w_tran,
              double[:, :, ::1] Y, double[:, ::1] p):
    cdef Py_ssize_t E = out_idx.shape[0]
    cdef Py_ssize_t r = Y.shape[1]
    cdef Py_ssize_t d = Y.shape[2]
    cdef Py_ssize_t e, a, b, k, u, v
    cdef double acc = 0.0, er, et, s
    for e in range(E):
        a = out_idx[e]
        b = in_idx[e]
        for u in range(r):
            for v in range(d):
                s = 0.0
                for k in range(d):
                    s += Y[a, u, k] * rot[e, k, v]
                er = Y[b, u, v] - s
                acc += w_rot[e] * er * er
            s = 0.0
            for k in range(d):
                s += Y[a, u, k] * trans[e, k]
            et = p[b, u] - p[a, u] - s
            acc += w_tran[e] * et * et
    return acc


def edge_grad(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] in_idx,
              double[:, :, ::1] rot, double[:, ::1] trans,
              double[::1] w_rot, double[::1] w_tran,
              double[:, :, ::1] Y, double[:, ::1] p,
              double[:, :, ::1] GY, double[:, ::1] Gp):
    _cost_grad(out_idx, in_idx, rot, trans, w_rot, w_tran, Y, p, GY, Gp)


def edge_cost_grad(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] in_idx,
                   double[:, :, ::1] rot, double[:, ::1] trans,
                   double[::1] w_rot, double[::1] w_tran,
                   double[:, :, ::1] Y, double[:, ::1] p,
                   double[:, :, ::1] GY, double[:, ::1] Gp):
    return _cost_grad(out_idx, in_idx, rot, trans, w_rot, w_tran, Y, p, GY, Gp)


def project_tangent_batch(double[:, :, ::1] Y, double[:, :, ::1] V):
    """out = V - Y sym(Y^T V) per block; Y, V: (N, r, d)."""
    cdef Py_ssize_t N = Y.shape[0]
    cdef Py_ssize_t r = Y.shape[1]
    cdef Py_ssize_t d = Y.shape[2]
    out_arr = np.empty((N, r, d))
    cdef double[:, :, ::1] out = out_arr
    cdef double s[16 * 16]
    cdef Py_ssize_t n, u, a, b, k
    for n in range(N):
        for a in range(d):
            for b in range(d):
                s[a * d + b] = 0.0
                for k in range(r):
                    s[a * d + b] += Y[n, k, a] * V[n, k, b]
        for a in range(d):
            for b in range(a, d):
                s[a * d + b] = 0.5 * (s[a * d + b] + s[b * d + a])
                s[b * d + a] = s[a * d + b]
        for u in range(r):
            for b in range(d):
                out[n, u, b] = V[n, u, b]
                for a in range(d):
                    out[n, u, b] -= Y[n, u, a] * s[a * d + b]
    return out_arr


def polar_retract_batch(double[:, :, ::1] A):
    """Orthonormal polar factor of each block: A (A^T A)^{-1/2}.

    Uses a cyclic-Jacobi eigendecomposition of the d x d Gram matrix; raises
    ValueError on (near-)rank-deficient blocks so the caller can fall back.
    """
    cdef Py_ssize_t N = A.shape[0]
    cdef Py_ssize_t r = A.shape[1]
    cdef Py_ssize_t d = A.shape[2]
    out_arr = np.empty((N, r, d))
    cdef double[:, :, ::1] out = out_arr
    cdef double m[16 * 16]
    cdef double q[16 * 16]
    cdef double w[16]
    cdef double inv[16 * 16]
    cdef Py_ssize_t n, a, b, k, u, sweep, pp, qq
    cdef double off, theta, t, c, sn, mpp, mqq, mpq, tmp, tr
    for n in range(N):
        for a in range(d):
            for b in range(d):
                m[a * d + b] = 0.0
                for k in range(r):
                    m[a * d + b] += A[n, k, a] * A[n, k, b]
                q[a * d + b] = 1.0 if a == b else 0.0
        tr = 0.0
        for a in range(d):
            tr += m[a * d + a]
        # Jacobi sweeps on the symmetric Gram matrix
        for sweep in range(30):
            off = 0.0
            for pp in range(d):
                for qq in range(pp + 1, d):
                    off += fabs(m[pp * d + qq])
            if off <= 1e-15 * (tr if tr > 0 else 1.0):
                break
            for pp in range(d):
                for qq in range(pp + 1, d):
                    mpq = m[pp * d + qq]
                    if fabs(mpq) < 1e-300:
                        continue
                    mpp = m[pp * d + pp]
                    mqq = m[qq * d + qq]
                    theta = 0.5 * (mqq - mpp) / mpq
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                    c = 1.0 / sqrt(t * t + 1.0)
                    sn = t * c
                    for k in range(d):
                        tmp = m[k * d + pp]
                        m[k * d + pp] = c * tmp - sn * m[k * d + qq]
                        m[k * d + qq] = sn * tmp + c * m[k * d + qq]
                    for k in range(d):
                        tmp = m[pp * d + k]
                        m[pp * d + k] = c * tmp - sn * m[qq * d + k]
                        m[qq * d + k] = sn * tmp + c * m[qq * d + k]
                    for k in range(d):
                        tmp = q[k * d + pp]
                        q[k * d + pp] = c * tmp - sn * q[k * d + qq]
                        q[k * d + qq] = sn * tmp + c * q[k * d + qq]
        for a in range(d):
            w[a] = m[a * d + a]
            if not w[a] > 1e-12 * (tr if tr > 0 else 1.0):
                raise ValueError("degenerate polar block")
        # inv = Q diag(w^-1/2) Q^T
        for a in range(d):
            for b in range(d):
                inv[a * d + b] = 0.0
                for k in range(d):
                    inv[a * d + b] += q[a * d + k] * q[b * d + k] / sqrt(w[k])
        for u in range(r):
            for b in range(d):
                out[n, u, b] = 0.0
                for a in range(d):
                    out[n, u, b] += A[n, u, a] * inv[a * d + b]
    return out_arr


cdef double _cost_grad(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] in_idx,
                       double[:, :, ::1] rot, double[:, ::1] trans,
                       double[::1] w_rot, double[::1] w_tran,
                       double[:, :, ::1] Y, double[:, ::1] p,
                       double[:, :, ::1] GY, double[:, ::1] Gp) noexcept:
    cdef Py_ssize_t E = out_idx.shape[0]
    cdef Py_ssize_t r = Y.shape[1]
    cdef Py_ssize_t d = Y.shape[2]
    cdef Py_ssize_t e, a, b, k, u, v
    cdef double acc = 0.0, et, s, wr2, wt2, gin
    # per-edge residual row buffer (d <= 3 in practice, 16 is generous)
    cdef double er[16]
    for e in range(E):
        a = out_idx[e]
        b = in_idx[e]
        wr2 = 2.0 * w_rot[e]
        wt2 = 2.0 * w_tran[e]
        for u in range(r):
            for v in range(d):
                s = 0.0
                for k in range(d):
                    s += Y[a, u, k] * rot[e, k, v]
                er[v] = Y[b, u, v] - s
                acc += w_rot[e] * er[v] * er[v]
            s = 0.0
            for k in range(d):
                s += Y[a, u, k] * trans[e, k]
            et = p[b, u] - p[a, u] - s
            acc += w_tran[e] * et * et
            for v in range(d):
                gin = wr2 * er[v]
                GY[b, u, v] += gin
                s = 0.0
                for k in range(d):
                    s += wr2 * er[k] * rot[e, v, k]
                GY[a, u, v] -= s + wt2 * et * trans[e, v]
            Gp[b, u] += wt2 * et
            Gp[a, u] -= wt2 * et
    return acc
