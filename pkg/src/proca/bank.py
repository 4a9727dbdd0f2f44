"""Adaptive prototype memory bank.

Per detected class the bank stores up to M raw target inputs ("prototypes")
chosen by greedy herding toward the class feature mean, together with the
model's soft predictions snapshotted at storage time.  Snapshots are frozen:
later training never touches them, so they act as the teacher signal for
knowledge replay.  A class's entries are replaced only when that class is
re-detected with a strictly higher normalized cumulative probability (or on
an explicit within-step refresh, which keeps the stored score).

The bank is a value: every operation returns a new bank.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (ClassAlreadyStored, EmptyBank, EmptyClass,
                     ShortfallWarning, UnknownClass)
from .model import ModelParams, forward
from .numerics import as_matrix


@dataclass(frozen=True)
class PrototypeEntry:
    prototype: np.ndarray    # input-space vector, length d
    soft_label: np.ndarray   # probability vector, length K, frozen
    pseudo_label: int
    selection_order: int     # 1..M


@dataclass(frozen=True)
class PrototypeBank:
    per_class: dict          # class -> tuple of PrototypeEntry
    best_cp: dict            # class -> normalized cumulative probability
    capacity_M: int

    @property
    def seen_classes(self) -> set:
        return set(self.per_class)

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.per_class.values())


def empty_bank(capacity_M: int) -> PrototypeBank:
    return PrototypeBank(per_class={}, best_cp={}, capacity_M=int(capacity_M))


def herd_select(X_k, params: ModelParams, M: int) -> np.ndarray:
    """Greedy herding order over the class's samples, as indices into X_k.

    Round m picks the sample minimizing the distance between the class
    feature mean and the mean of the m features selected so far; selection
    is without replacement and ties go to the smallest sample index.  When
    the class holds fewer than M samples all of them are selected and a
    shortfall warning is emitted.
    """
    X = as_matrix(X_k, "X_k")
    if X.shape[0] == 0:
        raise EmptyClass("herding needs at least one sample")
    if M < 1:
        raise EmptyClass(f"M must be >= 1, got {M}")
    if X.shape[0] < M:
        warnings.warn(f"class has {X.shape[0]} samples, below capacity {M}",
                      ShortfallWarning)
    F = forward(params, X).features
    return _kernels.herd_order(F, M)


def _snapshot_entries(prototypes, params: ModelParams, k: int) -> tuple:
    P = as_matrix(prototypes, "prototypes")
    probs = forward(params, P).probabilities
    entries = []
    for i in range(P.shape[0]):
        proto = P[i].copy()
        soft = probs[i].copy()
        proto.flags.writeable = False
        soft.flags.writeable = False
        entries.append(PrototypeEntry(prototype=proto, soft_label=soft,
                                      pseudo_label=int(k),
                                      selection_order=i + 1))
    return tuple(entries)


def insert_class(bank: PrototypeBank, k: int, prototypes,
                 params: ModelParams, cp_k: float) -> PrototypeBank:
    """Store a newly detected class; soft labels snapshot the current model."""
    k = int(k)
    if k in bank.per_class:
        raise ClassAlreadyStored(f"class {k} is already stored")
    per_class = dict(bank.per_class)
    best_cp = dict(bank.best_cp)
    per_class[k] = _snapshot_entries(prototypes, params, k)
    best_cp[k] = float(cp_k)
    return PrototypeBank(per_class, best_cp, bank.capacity_M)


def maybe_update_class(bank: PrototypeBank, k: int, cp_new: float, X_k,
                       params: ModelParams):
    """Replace a class's entries iff the new score is strictly higher."""
    k = int(k)
    if k not in bank.per_class:
        raise UnknownClass(f"class {k} has never been stored")
    if not cp_new > bank.best_cp[k]:
        return bank, False
    idx = herd_select(X_k, params, bank.capacity_M)
    X = as_matrix(X_k, "X_k")
    per_class = dict(bank.per_class)
    best_cp = dict(bank.best_cp)
    per_class[k] = _snapshot_entries(X[idx], params, k)
    best_cp[k] = float(cp_new)
    return PrototypeBank(per_class, best_cp, bank.capacity_M), True


def refresh_class(bank: PrototypeBank, k: int, X_k,
                  params: ModelParams) -> PrototypeBank:
    """Re-herd a stored class under the current model, keeping its score.

    Serves the periodic within-step prototype refresh; the score gate only
    applies to cross-step re-detections.
    """
    k = int(k)
    if k not in bank.per_class:
        raise UnknownClass(f"class {k} has never been stored")
    idx = herd_select(X_k, params, bank.capacity_M)
    X = as_matrix(X_k, "X_k")
    per_class = dict(bank.per_class)
    per_class[k] = _snapshot_entries(X[idx], params, k)
    return PrototypeBank(per_class, dict(bank.best_cp), bank.capacity_M)


def bank_tensors(bank: PrototypeBank):
    """Flatten to (P, H, labels): classes ascending, selection order within."""
    if bank.size == 0:
        raise EmptyBank("the bank holds no entries")
    protos, softs, labels = [], [], []
    for k in sorted(bank.per_class):
        for entry in bank.per_class[k]:
            protos.append(entry.prototype)
            softs.append(entry.soft_label)
            labels.append(entry.pseudo_label)
    return (np.stack(protos), np.stack(softs),
            np.asarray(labels, dtype=np.int64))


def save_bank(bank: PrototypeBank, path) -> None:
    payload = {
        "M": bank.capacity_M,
        "classes": [
            {
                "k": k,
                "best_cp": bank.best_cp[k],
                "prototypes": [e.prototype.tolist() for e in bank.per_class[k]],
                "soft_labels": [e.soft_label.tolist() for e in bank.per_class[k]],
            }
            for k in sorted(bank.per_class)
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_bank(path) -> PrototypeBank:
    payload = json.loads(Path(path).read_text())
    per_class = {}
    best_cp = {}
    for item in payload["classes"]:
        k = int(item["k"])
        entries = []
        for i, (p, s) in enumerate(zip(item["prototypes"], item["soft_labels"])):
            proto = np.asarray(p, dtype=np.float64)
            soft = np.asarray(s, dtype=np.float64)
            proto.flags.writeable = False
            soft.flags.writeable = False
            entries.append(PrototypeEntry(proto, soft, k, i + 1))
        per_class[k] = tuple(entries)
        best_cp[k] = float(item["best_cp"])
    return PrototypeBank(per_class, best_cp, int(payload["M"]))
