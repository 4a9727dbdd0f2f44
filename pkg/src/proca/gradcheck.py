"""Finite-difference verification of every analytic gradient.

Central differences with step 1e-5 are compared coordinate-wise against the
analytic gradients of the cross-entropy, alignment and distillation losses
and of their weighted combination through the full model.  The relative
error uses a small floor in the denominator so structurally-zero coordinates
do not divide by zero.
"""

from __future__ import annotations

import numpy as np

from .losses import SourceCenters, ce_loss, con_loss, dis_loss
from .model import ModelParams, backward, forward, init_params, params_from_dict
from .numerics import row_softmax
from .rng import RngStream

FD_STEP = 1e-5
REL_FLOOR = 1e-4


def fd_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar f at x, coordinate by coordinate."""
    g = np.zeros_like(x)
    flat = g.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = f(x)
        xf[i] = orig - step
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * step)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray,
                floor: float = REL_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def _random_instance(rng: RngStream):
    d = 2 + rng.randbelow(4)       # 2..5
    h = 2 + rng.randbelow(3)       # 2..4
    K = 2 + rng.randbelow(5)       # 2..6
    n = 1 + rng.randbelow(8)       # 1..8
    params = init_params(d, h, K, rng.child("init"))
    X = rng.normal(size=(n, d))
    y = np.asarray([rng.randbelow(K) for _ in range(n)], dtype=np.int64)
    return params, X, y, d, h, K, n


def check_ce(rng: RngStream) -> float:
    _, _, y, _, _, K, n = _random_instance(rng)
    Z = rng.normal(size=(n, K))
    _, grad = ce_loss(Z, y)
    num = fd_gradient(lambda A: ce_loss(A, y)[0], Z.copy())
    return max_rel_err(grad, num)


def check_dis(rng: RngStream) -> float:
    _, _, _, _, _, K, n = _random_instance(rng)
    Z = rng.normal(size=(n, K))
    H = row_softmax(rng.normal(size=(n, K)))
    _, grad = dis_loss(row_softmax(Z), H)
    num = fd_gradient(lambda A: dis_loss(row_softmax(A), H)[0], Z.copy())
    return max_rel_err(grad, num)


def check_con(rng: RngStream, normalize: bool = False) -> float:
    _, _, _, _, h, K, n = _random_instance(rng)
    V = rng.normal(size=(n, h))
    centers = SourceCenters(
        centers={k: rng.normal(size=(h,)) for k in range(K)},
        counts={k: 1 for k in range(K)})
    labels = np.asarray([rng.randbelow(K) for _ in range(n)], dtype=np.int64)
    tau = 0.5 + rng.random()
    _, dV, dC = con_loss(V, labels, centers, tau, normalize_features=normalize)

    err = max_rel_err(dV, fd_gradient(
        lambda A: con_loss(A, labels, centers, tau,
                           normalize_features=normalize)[0], V.copy()))
    for k in range(K):
        def f_center(c, k=k):
            moved = SourceCenters(centers={**centers.centers, k: c},
                                  counts=centers.counts)
            return con_loss(V, labels, moved, tau,
                            normalize_features=normalize)[0]
        err = max(err, max_rel_err(dC[k],
                                   fd_gradient(f_center, centers.centers[k].copy())))
    return err


def _composite_value(params: ModelParams, X, y, P, H, proto_labels, centers,
                     lam, eta, tau) -> float:
    trace = forward(params, X)
    ce, _ = ce_loss(trace.logits, y)
    ptrace = forward(params, P)
    con, _, _ = con_loss(ptrace.features, proto_labels, centers, tau)
    dis, _ = dis_loss(ptrace.probabilities, H)
    return ce + lam * con + eta * dis


def check_composite(rng: RngStream) -> float:
    """Weighted total through the full model: two backward passes, cotangents
    at the logits (ce, dis) and the features (con), against FD over every
    parameter block.  Source centers are held constant, as in training."""
    params, X, y, d, h, K, n = _random_instance(rng)
    N = 1 + rng.randbelow(8)
    P = rng.normal(size=(N, d))
    H = row_softmax(rng.normal(size=(N, K)))
    proto_labels = np.asarray([rng.randbelow(K) for _ in range(N)],
                              dtype=np.int64)
    centers = SourceCenters(
        centers={k: rng.normal(size=(h,)) for k in range(K)},
        counts={k: 1 for k in range(K)})
    lam, eta, tau = 0.1, 1.0, 0.5 + rng.random()

    trace = forward(params, X)
    _, d_logits = ce_loss(trace.logits, y)
    grads = backward(params, trace, d_logits, None)
    ptrace = forward(params, P)
    _, dV, _ = con_loss(ptrace.features, proto_labels, centers, tau)
    _, d_pl = dis_loss(ptrace.probabilities, H)
    pgrads = backward(params, ptrace, eta * d_pl, lam * dV)
    grads = {k: grads[k] + pgrads[k] for k in grads}

    worst = 0.0
    blocks = params.as_dict()
    for name, block in blocks.items():
        def f_block(b, name=name):
            moved = params_from_dict({**blocks, name: b})
            return _composite_value(moved, X, y, P, H, proto_labels, centers,
                                    lam, eta, tau)
        worst = max(worst, max_rel_err(grads[name],
                                       fd_gradient(f_block, block.copy())))
    return worst


def check_model_backward(rng: RngStream) -> float:
    """Random cotangents at both attachment points against FD of the
    corresponding linear functional of the forward outputs."""
    params, X, _, d, h, K, n = _random_instance(rng)
    d_logits = rng.normal(size=(n, K))
    d_feat = rng.normal(size=(n, h))
    trace = forward(params, X)
    grads = backward(params, trace, d_logits, d_feat)

    blocks = params.as_dict()
    worst = 0.0
    for name, block in blocks.items():
        def f_block(b, name=name):
            moved = params_from_dict({**blocks, name: b})
            tr = forward(moved, X)
            return float((tr.logits * d_logits).sum()
                         + (tr.features * d_feat).sum())
        worst = max(worst, max_rel_err(grads[name],
                                       fd_gradient(f_block, block.copy())))
    return worst


def run_suite(seed: int = 0, instances: int = 100) -> dict:
    """Max relative FD error per gradient path over `instances` random cases."""
    rng = RngStream(seed, "gradcheck")
    results = {"ce": 0.0, "con": 0.0, "dis": 0.0, "model": 0.0,
               "composite": 0.0}
    for i in range(instances):
        case = rng.child(f"case{i}")
        results["ce"] = max(results["ce"], check_ce(case.child("ce")))
        results["con"] = max(results["con"], check_con(case.child("con")))
        results["dis"] = max(results["dis"], check_dis(case.child("dis")))
        results["model"] = max(results["model"],
                               check_model_backward(case.child("model")))
        results["composite"] = max(results["composite"],
                                   check_composite(case.child("composite")))
    results["max"] = max(results.values())
    return results
