"""Pseudo-label generation restricted to the detected shared classes.

Initial centroids are probability-weighted feature means; samples are then
assigned to the nearest centroid by cosine similarity, centroids are rebuilt
as hard per-class means, and assignment runs exactly once more.  Ties at the
argmax go to the smallest class index.  Classes whose centroid would be a
0/0 (total weight below 1e-12) or a zero vector are dropped for the step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import SharedClassSet
from .errors import InvalidShape, NoUsableCentroids, ZeroVector
from .model import ModelParams, forward
from .numerics import as_matrix

_WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class PseudoLabeling:
    centroids: dict            # class -> feature-space vector
    assignments: np.ndarray    # per-sample class indices
    restricted_to: SharedClassSet


def _usable(centroids: dict) -> dict:
    kept = {k: c for k, c in centroids.items() if np.linalg.norm(c) > 0.0}
    if not kept:
        raise NoUsableCentroids("every candidate centroid was dropped")
    return kept


def initial_centroids(Q, probs, shared: SharedClassSet) -> dict:
    """Soft centroids c_k = sum_i p_ik q_i / sum_i p_ik for shared k."""
    Qm = as_matrix(Q, "Q")
    P = as_matrix(probs, "probs")
    if Qm.shape[0] != P.shape[0]:
        raise InvalidShape(f"Q has {Qm.shape[0]} rows but probs has {P.shape[0]}")
    centroids = {}
    for k in shared.classes:
        w = P[:, k]
        total = w.sum()
        if total < _WEIGHT_FLOOR:
            continue
        centroids[int(k)] = (w @ Qm) / total
    return _usable(centroids)


def assign_labels(Q, centroids: dict) -> np.ndarray:
    """Nearest centroid by cosine similarity, smallest class index on ties.

    Rows and centroids are L2-normalized before the dot product, which makes
    exact ties exact in floating point as well.
    """
    Qm = as_matrix(Q, "Q")
    if not centroids:
        raise NoUsableCentroids("no centroids to assign against")
    norms = np.linalg.norm(Qm, axis=1)
    if (norms == 0.0).any():
        raise ZeroVector("a feature row has zero norm")
    classes = sorted(centroids)
    C = np.stack([centroids[k] for k in classes])
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    sims = (Qm / norms[:, None]) @ C.T
    # argmax returns the first maximum, i.e. the smallest class index
    picks = sims.argmax(axis=1)
    lookup = np.asarray(classes, dtype=np.int64)
    return lookup[picks]


def refine_once(Q, assignments, shared: SharedClassSet):
    """Hard per-class means over current assignments, then one reassignment."""
    Qm = as_matrix(Q, "Q")
    a = np.asarray(assignments, dtype=np.int64)
    centroids = {}
    for k in shared.classes:
        mask = a == k
        if not mask.any():
            continue
        centroids[int(k)] = Qm[mask].mean(axis=0)
    centroids = _usable(centroids)
    return centroids, assign_labels(Qm, centroids)


def pseudo_label_pipeline(params: ModelParams, X_target,
                          shared: SharedClassSet) -> PseudoLabeling:
    """forward -> soft centroids -> cosine assignment -> one refinement."""
    trace = forward(params, X_target)
    cents = initial_centroids(trace.features, trace.probabilities, shared)
    first = assign_labels(trace.features, cents)
    cents, final = refine_once(trace.features, first, shared)
    return PseudoLabeling(centroids=cents, assignments=final,
                          restricted_to=shared)
