"""Shared-class detection from cumulative prediction probabilities.

For each class k the detector sums the model's predicted probability over all
current target samples, rescales the per-class sums to [0,1] by min-max
normalization, and accepts class k as shared when its normalized value clears
a threshold.  Two thresholding rules are provided: a fixed threshold alpha and
the variance-maximizing binary split baseline (Otsu-style), which picks the
cut over the sorted normalized values that maximizes between-group variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateDetection, EmptyInput, InvalidParam,
                     InvalidShape)
from .model import ModelParams, forward
from .numerics import as_matrix, minmax_normalize


@dataclass(frozen=True)
class CumulativeProbs:
    raw: np.ndarray         # length K, raw per-class probability sums
    normalized: np.ndarray  # min-max rescale of raw into [0, 1]
    degenerate: bool        # all raw values equal; normalized is all ones


@dataclass(frozen=True)
class SharedClassSet:
    classes: tuple          # sorted class indices
    threshold_used: float
    method: str             # "alpha" | "hbw" | "none"

    def as_set(self) -> set:
        return set(self.classes)


def cumulative_from_probabilities(probs) -> CumulativeProbs:
    """Build cumulative per-class sums from an n x K prediction matrix."""
    P = as_matrix(probs, "probs")
    if P.shape[0] == 0:
        raise EmptyInput("prediction matrix has no rows")
    if P.shape[1] < 2:
        raise InvalidShape("need at least two classes")
    raw = P.sum(axis=0)
    norm = minmax_normalize(raw)
    return CumulativeProbs(raw=raw, normalized=norm.values,
                           degenerate=norm.degenerate)


def cumulative_probabilities(params: ModelParams, X_target) -> CumulativeProbs:
    X = as_matrix(X_target, "X_target")
    if X.shape[0] == 0:
        raise EmptyInput("target batch is empty")
    trace = forward(params, X)
    return cumulative_from_probabilities(trace.probabilities)


def detect_shared(cp: CumulativeProbs, alpha: float) -> SharedClassSet:
    """Classes whose normalized cumulative probability is >= alpha.

    Ties at the threshold are included.  A degenerate profile (all sums equal)
    carries no information: every class is reported and a DegenerateDetection
    warning is issued so the run report can surface it.
    """
    if not 0 < alpha < 1:
        raise InvalidParam(f"alpha must be in (0, 1), got {alpha}")
    if cp.degenerate:
        warnings.warn("cumulative probabilities are degenerate; "
                      "reporting all classes", DegenerateDetection)
        classes = tuple(range(cp.normalized.size))
        return SharedClassSet(classes, alpha, "alpha")
    classes = tuple(int(k) for k in np.nonzero(cp.normalized >= alpha)[0])
    return SharedClassSet(classes, alpha, "alpha")


def hbw_threshold(cp: CumulativeProbs) -> SharedClassSet:
    """Variance-maximizing binary split of the normalized values.

    Every sorted value except the minimum is a candidate threshold t; the
    groups are {v < t} and {v >= t} and the score is the between-group
    variance w_lo*w_hi*(mu_lo - mu_hi)^2.  Candidates are scanned in
    ascending order and ties keep the first (smallest) threshold, so the
    rule is deterministic and brute-force checkable.
    """
    if cp.degenerate:
        raise DegenerateDetection("cumulative probabilities are degenerate; "
                                  "no variance split exists")
    v = cp.normalized
    K = v.size
    if K < 2:
        raise InvalidShape("need at least two classes to split")
    order = np.sort(v)
    best_score = -1.0
    best_t = None
    for i in range(1, K):
        t = order[i]
        hi = v >= t
        n_hi = int(hi.sum())
        n_lo = K - n_hi
        if n_hi == 0 or n_lo == 0:
            continue
        w_hi = n_hi / K
        w_lo = n_lo / K
        score = w_lo * w_hi * (v[~hi].mean() - v[hi].mean()) ** 2
        if score > best_score:
            best_score = score
            best_t = float(t)
    classes = tuple(int(k) for k in np.nonzero(v >= best_t)[0])
    return SharedClassSet(classes, best_t, "hbw")
