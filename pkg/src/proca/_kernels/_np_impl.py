"""Numpy implementation of the hot kernels (fallback backend)."""

import numpy as np


def row_softmax(Z):
    """Row-wise softmax with max subtraction for stability."""
    Zs = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Zs)
    return E / E.sum(axis=1, keepdims=True)


def mlp_forward(X, W1, b1, W2, b2, Wc, bc):
    """Two tanh layers plus a linear head; returns all intermediates."""
    Z1 = X @ W1 + b1
    A1 = np.tanh(Z1)
    Z2 = A1 @ W2 + b2
    Q = np.tanh(Z2)
    L = Q @ Wc + bc
    return Z1, A1, Z2, Q, L


def mlp_backward(X, A1, Q, W2, Wc, d_logits, d_features):
    """Exact reverse pass; cotangents attach at the logits and the features."""
    dWc = Q.T @ d_logits
    dbc = d_logits.sum(axis=0)
    dQ = d_logits @ Wc.T + d_features
    dZ2 = dQ * (1.0 - Q * Q)
    dW2 = A1.T @ dZ2
    db2 = dZ2.sum(axis=0)
    dA1 = dZ2 @ W2.T
    dZ1 = dA1 * (1.0 - A1 * A1)
    dW1 = X.T @ dZ1
    db1 = dZ1.sum(axis=0)
    return dW1, db1, dW2, db2, dWc, dbc


def sgd_update(param, grad, velocity, lr, momentum, weight_decay):
    """velocity <- m*v + (g + wd*p); param <- p - lr*velocity."""
    v = momentum * velocity + (grad + weight_decay * param)
    return param - lr * v, v


def herd_order(F, M):
    """Greedy exemplar order: at round m pick the sample whose inclusion
    brings the running exemplar-feature mean closest (L2) to the class mean.
    Without replacement; ties resolved to the smallest sample index."""
    n = F.shape[0]
    m_total = min(int(M), n)
    mean = F.mean(axis=0)
    acc = np.zeros(F.shape[1], dtype=np.float64)
    taken = np.zeros(n, dtype=bool)
    order = np.empty(m_total, dtype=np.int64)
    for m in range(1, m_total + 1):
        diff = mean - (acc + F) / m
        crit = np.einsum("ij,ij->i", diff, diff)
        crit[taken] = np.inf
        pick = int(np.argmin(crit))
        order[m - 1] = pick
        acc += F[pick]
        taken[pick] = True
    return order
