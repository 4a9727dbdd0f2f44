"""The trainable pipeline: feature extractor G (two tanh layers) and linear
classifier C, with explicit forward and backward passes.

Parameters are immutable values; updates produce new instances.  The backward
pass accepts loss cotangents at the logits and at the features simultaneously,
so classifier-level losses and feature-level losses compose in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidShape
from .numerics import as_matrix, check_finite
from .rng import RngStream

PARAM_BLOCKS = ("W1", "b1", "W2", "b2", "Wc", "bc")


@dataclass(frozen=True)
class ModelParams:
    W1: np.ndarray  # d x h
    b1: np.ndarray  # h
    W2: np.ndarray  # h x h
    b2: np.ndarray  # h
    Wc: np.ndarray  # h x K
    bc: np.ndarray  # K

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def h(self) -> int:
        return self.W1.shape[1]

    @property
    def K(self) -> int:
        return self.Wc.shape[1]

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_BLOCKS}


def params_from_dict(blocks: dict) -> ModelParams:
    return ModelParams(**{k: blocks[k] for k in PARAM_BLOCKS})


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the backward pass needs, kept from one forward call."""

    inputs: np.ndarray
    z1: np.ndarray
    hidden: np.ndarray
    z2: np.ndarray
    features: np.ndarray        # Q, n x h
    logits: np.ndarray          # n x K
    probabilities: np.ndarray   # row-softmax of logits


def init_params(d: int, h: int, K: int, rng: RngStream) -> ModelParams:
    """Uniform weights in [-s, s] with s = sqrt(6/(fan_in+fan_out)); zero biases."""
    if d < 1 or h < 1 or K < 1:
        raise InvalidShape(f"dimensions must be >= 1, got d={d} h={h} K={K}")

    def block(fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=(fan_in, fan_out))

    return ModelParams(
        W1=block(d, h),
        b1=np.zeros(h),
        W2=block(h, h),
        b2=np.zeros(h),
        Wc=block(h, K),
        bc=np.zeros(K),
    )


def forward(params: ModelParams, X) -> ForwardTrace:
    """Q = tanh(tanh(X W1 + b1) W2 + b2); logits = Q Wc + bc; probs = softmax."""
    Xm = as_matrix(X, "X")
    if Xm.shape[1] != params.d:
        raise InvalidShape(f"X has {Xm.shape[1]} columns, model expects {params.d}")
    z1, a1, z2, q, logits = _kernels.mlp_forward(
        Xm, params.W1, params.b1, params.W2, params.b2, params.Wc, params.bc)
    check_finite(logits, "logits")
    probs = _kernels.row_softmax(logits)
    return ForwardTrace(Xm, z1, a1, z2, q, logits, probs)


def backward(params: ModelParams, trace: ForwardTrace,
             d_logits=None, d_features=None) -> dict:
    """Exact parameter gradients for batch-summed cotangents.

    Either cotangent may be omitted (treated as zero).  Returns a dict keyed
    by parameter block name, shapes matching the parameters.
    """
    n, h = trace.features.shape
    K = params.K
    if d_logits is None:
        d_logits = np.zeros((n, K))
    else:
        d_logits = as_matrix(d_logits, "d_logits")
        if d_logits.shape != (n, K):
            raise InvalidShape(f"d_logits must be {(n, K)}, got {d_logits.shape}")
    if d_features is None:
        d_features = np.zeros((n, h))
    else:
        d_features = as_matrix(d_features, "d_features")
        if d_features.shape != (n, h):
            raise InvalidShape(f"d_features must be {(n, h)}, got {d_features.shape}")
    dW1, db1, dW2, db2, dWc, dbc = _kernels.mlp_backward(
        trace.inputs, trace.hidden, trace.features, params.W2, params.Wc,
        d_logits, d_features)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2, "Wc": dWc, "bc": dbc}


def save_checkpoint(params: ModelParams, path) -> None:
    """JSON checkpoint: dims plus flat row-major arrays per block."""
    payload = {"d": params.d, "h": params.h, "K": params.K}
    for k in PARAM_BLOCKS:
        payload[k] = getattr(params, k).ravel().tolist()
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> ModelParams:
    payload = json.loads(Path(path).read_text())
    d, h, K = int(payload["d"]), int(payload["h"]), int(payload["K"])
    shapes = {"W1": (d, h), "b1": (h,), "W2": (h, h), "b2": (h,),
              "Wc": (h, K), "bc": (K,)}
    blocks = {}
    for k, shape in shapes.items():
        arr = np.asarray(payload[k], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise InvalidShape(f"checkpoint block {k} has {arr.size} values, "
                               f"expected {int(np.prod(shape))}")
        blocks[k] = arr.reshape(shape)
    return params_from_dict(blocks)
