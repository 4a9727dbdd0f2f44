"""Shared dense numeric primitives.

All values are float64, row-major, immutable by convention: every operation
returns fresh arrays and never mutates its inputs.  Arrays standing in for
matrices are 2-D C-contiguous ndarrays; vectors are 1-D.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import InvalidNumeric, InvalidParam, InvalidShape, ZeroVector


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidShape(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def as_vector(x, name: str = "vector") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidShape(f"{name} must be 1-D, got ndim={a.ndim}")
    return a


def check_finite(a: np.ndarray, name: str = "value") -> np.ndarray:
    if not np.isfinite(a).all():
        raise InvalidNumeric(f"{name} contains NaN or Inf")
    return a


def softmax(logits) -> np.ndarray:
    """Stable softmax of a vector (max subtraction, entries in (0,1])."""
    v = as_vector(logits, "logits")
    if v.size < 1:
        raise InvalidShape("softmax needs at least one logit")
    check_finite(v, "logits")
    return _kernels.row_softmax(v.reshape(1, -1))[0]


def row_softmax(logits) -> np.ndarray:
    """Stable softmax applied to every row of a matrix."""
    Z = as_matrix(logits, "logits")
    check_finite(Z, "logits")
    return _kernels.row_softmax(Z)


class MinMaxResult(NamedTuple):
    values: np.ndarray
    degenerate: bool


def minmax_normalize(v) -> MinMaxResult:
    """Rescale to [0,1] via (v - min)/(max - min).

    When max == min the rescale is undefined; the all-ones vector is returned
    with the degenerate flag set so callers can decide policy.
    """
    a = as_vector(v, "input")
    if a.size < 2:
        raise InvalidShape("minmax_normalize needs length >= 2")
    check_finite(a, "input")
    lo, hi = a.min(), a.max()
    if hi == lo:
        return MinMaxResult(np.ones_like(a), True)
    return MinMaxResult((a - lo) / (hi - lo), False)


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|), clipped into [-1, 1] against rounding."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape != vb.shape:
        raise InvalidShape(f"length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(float(va @ vb) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class SgdState:
    """Momentum buffers plus the optimizer hyperparameters."""

    velocity: dict
    learning_rate: float
    momentum: float
    weight_decay: float

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParam("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidParam("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidParam("weight_decay must be >= 0")


def init_sgd_state(params: dict, learning_rate: float, momentum: float,
                   weight_decay: float) -> SgdState:
    vel = {k: np.zeros_like(v) for k, v in params.items()}
    return SgdState(vel, learning_rate, momentum, weight_decay)


def sgd_momentum_step(params: dict, grads: dict, state: SgdState):
    """One SGD step with classic momentum and decoupled-from-nothing L2.

    velocity <- momentum*velocity + (grad + weight_decay*param)
    param    <- param - learning_rate*velocity
    """
    if set(params) != set(grads):
        raise InvalidShape("params and grads must cover the same blocks")
    new_params = {}
    new_vel = {}
    for key, p in params.items():
        g = grads[key]
        v = state.velocity[key]
        if g.shape != p.shape or v.shape != p.shape:
            raise InvalidShape(f"shape mismatch on block {key!r}")
        p2, v2 = _kernels.sgd_update(p, g, v, state.learning_rate,
                                     state.momentum, state.weight_decay)
        check_finite(p2, f"updated block {key!r}")
        new_params[key] = p2
        new_vel[key] = v2
    return new_params, SgdState(new_vel, state.learning_rate, state.momentum,
                                state.weight_decay)
