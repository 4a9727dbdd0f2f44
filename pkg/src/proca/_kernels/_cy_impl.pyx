# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot kernels.

Semantically identical to the numpy backend; results agree to floating-point
rounding (summation order differs), not bit-for-bit.  No fast-math flags are
used so each backend stays deterministic run to run.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh, INFINITY

cnp.import_array()


def row_softmax(double[:, ::1] Z):
    cdef Py_ssize_t n = Z.shape[0], k = Z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, k))
    cdef double[:, ::1] P = out
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(n):
        m = Z[i, 0]
        for j in range(1, k):
            if Z[i, j] > m:
                m = Z[i, j]
        s = 0.0
        for j in range(k):
            P[i, j] = exp(Z[i, j] - m)
            s += P[i, j]
        for j in range(k):
            P[i, j] /= s
    return out


cdef _matmul_bias(double[:, ::1] A, double[:, ::1] W, double[::1] b,
                  double[:, ::1] out):
    cdef Py_ssize_t n = A.shape[0], p = A.shape[1], q = W.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(q):
            acc = b[j]
            for l in range(p):
                acc += A[i, l] * W[l, j]
            out[i, j] = acc


def mlp_forward(double[:, ::1] X,
                double[:, ::1] W1, double[::1] b1,
                double[:, ::1] W2, double[::1] b2,
                double[:, ::1] Wc, double[::1] bc):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t h = W1.shape[1], k = Wc.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Z1 = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A1 = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Z2 = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Q = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] L = np.empty((n, k))
    cdef double[:, ::1] z1 = Z1, a1 = A1, z2 = Z2, q = Q
    cdef Py_ssize_t i, j
    _matmul_bias(X, W1, b1, z1)
    for i in range(n):
        for j in range(h):
            a1[i, j] = tanh(z1[i, j])
    _matmul_bias(a1, W2, b2, z2)
    for i in range(n):
        for j in range(h):
            q[i, j] = tanh(z2[i, j])
    _matmul_bias(q, Wc, bc, L)
    return Z1, A1, Z2, Q, L


cdef _at_b(double[:, ::1] A, double[:, ::1] B, double[:, ::1] out):
    # out = A.T @ B, accumulated over the batch axis
    cdef Py_ssize_t n = A.shape[0], p = A.shape[1], q = B.shape[1]
    cdef Py_ssize_t i, j, l
    for j in range(p):
        for l in range(q):
            out[j, l] = 0.0
    for i in range(n):
        for j in range(p):
            for l in range(q):
                out[j, l] += A[i, j] * B[i, l]


cdef _a_bt(double[:, ::1] A, double[:, ::1] B, double[:, ::1] out):
    # out = A @ B.T
    cdef Py_ssize_t n = A.shape[0], p = B.shape[0], q = A.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(p):
            acc = 0.0
            for l in range(q):
                acc += A[i, l] * B[j, l]
            out[i, j] = acc


def mlp_backward(double[:, ::1] X, double[:, ::1] A1, double[:, ::1] Q,
                 double[:, ::1] W2, double[:, ::1] Wc,
                 double[:, ::1] d_logits, double[:, ::1] d_features):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t h = A1.shape[1], k = d_logits.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dW1 = np.empty((d, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] db1 = np.zeros(h)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dW2 = np.empty((h, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] db2 = np.zeros(h)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dWc = np.empty((h, k))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dbc = np.zeros(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dQ = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dZ2 = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dA1 = np.empty((n, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dZ1 = np.empty((n, h))
    cdef double[:, ::1] vdQ = dQ, vdZ2 = dZ2, vdA1 = dA1, vdZ1 = dZ1
    cdef double[::1] vdb1 = db1, vdb2 = db2, vdbc = dbc
    cdef Py_ssize_t i, j

    _at_b(Q, d_logits, dWc)
    for i in range(n):
        for j in range(k):
            vdbc[j] += d_logits[i, j]
    _a_bt(d_logits, Wc, vdQ)
    for i in range(n):
        for j in range(h):
            vdQ[i, j] += d_features[i, j]
            vdZ2[i, j] = vdQ[i, j] * (1.0 - Q[i, j] * Q[i, j])
    _at_b(A1, vdZ2, dW2)
    for i in range(n):
        for j in range(h):
            vdb2[j] += vdZ2[i, j]
    _a_bt(vdZ2, W2, vdA1)
    for i in range(n):
        for j in range(h):
            vdZ1[i, j] = vdA1[i, j] * (1.0 - A1[i, j] * A1[i, j])
    _at_b(X, vdZ1, dW1)
    for i in range(n):
        for j in range(h):
            vdb1[j] += vdZ1[i, j]
    return dW1, db1, dW2, db2, dWc, dbc


def sgd_update(param, grad, velocity, double lr, double momentum,
               double weight_decay):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.ascontiguousarray(param).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.ascontiguousarray(grad).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(velocity).ravel()
    cdef Py_ssize_t n = p.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v2 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p2 = np.empty(n)
    for i in range(n):
        v2[i] = momentum * v[i] + (g[i] + weight_decay * p[i])
        p2[i] = p[i] - lr * v2[i]
    shape = np.asarray(param).shape
    return p2.reshape(shape), v2.reshape(shape)


def herd_order(double[:, ::1] F, M):
    cdef Py_ssize_t n = F.shape[0], h = F.shape[1]
    cdef Py_ssize_t m_total = min(int(M), n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mean = np.zeros(h)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] acc = np.zeros(h)
    cdef double[::1] vmean = mean, vacc = acc
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.empty(m_total, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] taken = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, j, m, pick
    cdef double crit, best, diff
    for i in range(n):
        for j in range(h):
            vmean[j] += F[i, j]
    for j in range(h):
        vmean[j] /= n
    for m in range(1, m_total + 1):
        best = INFINITY
        pick = -1
        for i in range(n):
            if taken[i]:
                continue
            crit = 0.0
            for j in range(h):
                diff = vmean[j] - (vacc[j] + F[i, j]) / m
                crit += diff * diff
            if crit < best:
                best = crit
                pick = i
        order[m - 1] = pick
        taken[pick] = 1
        for j in range(h):
            vacc[j] += F[pick, j]
    return order
