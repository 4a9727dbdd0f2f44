"""Loss values, their input gradients, and the combined training objective.

Three terms: cross-entropy on labeled source plus pseudo-labeled target
samples, a contrastive alignment loss pulling each stored prototype's feature
toward its class's source center against the other centers, and a soft-target
distillation loss holding predictions on stored prototypes near their frozen
snapshots.  Total = ce + lam*con + eta*dis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import (ClampWarning, InvalidLabel, InvalidNumeric, InvalidParam,
                     InvalidShape, MissingCenter, ZeroVector)
from .model import ModelParams, forward
from .numerics import as_matrix, row_softmax

_LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    con: float
    dis: float
    total: float
    lam: float
    eta: float


@dataclass(frozen=True)
class SourceCenters:
    centers: dict  # class -> mean feature vector
    counts: dict   # class -> sample count


def source_centers(params: ModelParams, source: LabeledDataset) -> SourceCenters:
    """Per-class mean of extracted source features, for classes present."""
    feats = forward(params, source.features).features
    centers = {}
    counts = {}
    for k in range(source.K):
        mask = source.labels == k
        n_k = int(mask.sum())
        if n_k == 0:
            continue
        centers[k] = feats[mask].mean(axis=0)
        counts[k] = n_k
    return SourceCenters(centers=centers, counts=counts)


def ce_loss(logits, labels):
    """Mean cross-entropy; gradient at the logits is (softmax - onehot)/n."""
    Z = as_matrix(logits, "logits")
    y = np.asarray(labels, dtype=np.int64)
    n, K = Z.shape
    if y.shape != (n,):
        raise InvalidShape(f"labels must have shape ({n},), got {y.shape}")
    if y.min() < 0 or y.max() >= K:
        raise InvalidLabel(f"labels must lie in 0..{K - 1}")
    shifted = Z - Z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(logsumexp - shifted[np.arange(n), y]))
    grad = row_softmax(Z)
    grad[np.arange(n), y] -= 1.0
    return value, grad / n


def con_loss(V, labels, centers: SourceCenters, tau: float,
             normalize_features: bool = False):
    """Contrastive alignment of prototype features to source centers.

    Each anchor's positive is the source center of its pseudo class; every
    other class's center is a negative.  Logit(i, j) = v_i . f_j / tau (raw
    dot products by default; set normalize_features to L2-normalize both
    sides first).  Returns the mean loss, the gradient w.r.t. V, and the
    gradient w.r.t. the centers (which the trainer treats as constants and
    discards).
    """
    if not tau > 0:
        raise InvalidParam(f"tau must be > 0, got {tau}")
    Vm = as_matrix(V, "V")
    y = np.asarray(labels, dtype=np.int64)
    n = Vm.shape[0]
    class_ids = sorted(centers.centers)
    missing = set(int(v) for v in y) - set(class_ids)
    if missing:
        raise MissingCenter(f"no source center for classes {sorted(missing)}")
    F = np.stack([centers.centers[k] for k in class_ids])
    col_of = {k: i for i, k in enumerate(class_ids)}
    y_cols = np.asarray([col_of[int(v)] for v in y])

    if normalize_features:
        v_norm = np.linalg.norm(Vm, axis=1, keepdims=True)
        f_norm = np.linalg.norm(F, axis=1, keepdims=True)
        if (v_norm == 0).any() or (f_norm == 0).any():
            raise ZeroVector("normalized mode needs nonzero rows and centers")
        A, B = Vm / v_norm, F / f_norm
    else:
        A, B = Vm, F
    logits = (A @ B.T) / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(logsumexp - shifted[np.arange(n), y_cols]))

    P = row_softmax(logits)
    P[np.arange(n), y_cols] -= 1.0
    dA = (P @ B) / (n * tau)
    dB = (P.T @ A) / (n * tau)
    if normalize_features:
        # pull the cotangents back through the row normalization
        dV = (dA - (dA * A).sum(axis=1, keepdims=True) * A) / v_norm
        dF = (dB - (dB * B).sum(axis=1, keepdims=True) * B) / f_norm
    else:
        dV, dF = dA, dB
    d_centers = {k: dF[i] for i, k in enumerate(class_ids)}
    return value, dV, d_centers


def dis_loss(current_probs, H):
    """Soft-target cross-entropy against frozen snapshots.

    value = -(1/N) sum_i h_i . log p_i with log arguments clamped at 1e-30;
    the gradient is taken at the logits of current_probs:
    ((sum_k h_ik) p_i - h_i)/N.
    """
    P = as_matrix(current_probs, "current_probs")
    Hm = as_matrix(H, "H")
    if P.shape != Hm.shape:
        raise InvalidShape(f"shape mismatch: {P.shape} vs {Hm.shape}")
    n = P.shape[0]
    clamped = P < _LOG_FLOOR
    if (clamped & (Hm > 0)).any():
        warnings.warn("zero probability under a positive soft target; "
                      "log clamped at 1e-30", ClampWarning)
    value = float(-(Hm * np.log(np.maximum(P, _LOG_FLOOR))).sum() / n)
    grad = (Hm.sum(axis=1, keepdims=True) * P - Hm) / n
    return value, grad


def total_loss(ce: float, con: float, dis: float, lam: float,
               eta: float) -> LossBreakdown:
    for name, v in (("ce", ce), ("con", con), ("dis", dis),
                    ("lam", lam), ("eta", eta)):
        if not math.isfinite(v):
            raise InvalidNumeric(f"{name} is not finite: {v}")
    return LossBreakdown(ce=float(ce), con=float(con), dis=float(dis),
                         total=float(ce + lam * con + eta * dis),
                         lam=float(lam), eta=float(eta))
