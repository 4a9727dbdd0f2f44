"""Source pretraining and the per-step continual adaptation loop.

One adaptation step: detect shared classes from cumulative probabilities,
pseudo-label the batch restricted to the detected set, expand or update the
prototype bank, then train for E epochs on mini-batches mixing source and
pseudo-labeled target samples (cross-entropy) plus the full bank (alignment
and distillation), with periodic refreshes of pseudo labels, prototypes and
source centers.

Determinism contract (all randomness flows through RngStream):
  * run_stream uses RngStream(seed, "run"); pretraining draws from its
    "pretrain" child and step t from its "step{t}" child.
  * pretrain_source: parameters from child "init"; one permutation of the
    source rows per epoch from child "shuffle".
  * adapt_step: one permutation of the target pool per epoch from child
    "shuffle"; source rows come from successive permutations drawn on demand
    from child "source_shuffle".  Batches take ceil(n_t/half) target chunks
    of half = batch_size//2 rows and fill the rest from the source cursor.
  * Dataset rows are sorted into a canonical order before any computation,
    so permuting input rows cannot change a run.

Optimizer state (momentum buffers) is fresh for pretraining and for every
adaptation step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .bank import (PrototypeBank, bank_tensors, empty_bank, herd_select,
                   insert_class, maybe_update_class, refresh_class, save_bank)
from .data import IncrementalStream, LabeledDataset, StreamStep
from .detector import (SharedClassSet, cumulative_probabilities, detect_shared,
                       hbw_threshold)
from .errors import (DegenerateDetection, EmptyInput, IncompleteSource,
                     InvalidParam)
from .evaluation import (RunReport, StepMetrics, accuracy, s1_accuracy,
                         step_level_accuracy)
from .losses import ce_loss, con_loss, dis_loss, source_centers, total_loss
from .model import (ModelParams, backward, forward, init_params,
                    params_from_dict, save_checkpoint)
from .numerics import init_sgd_state, sgd_momentum_step
from .pseudo import pseudo_label_pipeline
from .rng import RngStream

METHODS = ("proca", "source_only", "no_scd", "hbw")


@dataclass(frozen=True)
class HyperParams:
    lam: float = 0.1
    eta: float = 1.0
    alpha: float = 0.15
    M: int = 10
    tau: float = 0.1
    epochs_per_step: int = 15
    pretrain_epochs: int = 50
    batch_size: int = 64
    hidden: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-6
    refresh_pseudo: int = 4
    refresh_prototypes: int = 7
    refresh_centers: int = 5
    seed: int = 0
    method: str = "proca"
    use_con: bool = True
    use_dis: bool = True
    normalize_features: bool = False

    def validate(self) -> "HyperParams":
        if self.method not in METHODS:
            raise InvalidParam(f"method must be one of {METHODS}, "
                               f"got {self.method!r}")
        if not 0 < self.alpha < 1:
            raise InvalidParam("alpha must be in (0, 1)")
        if self.tau <= 0 or self.lam < 0 or self.eta < 0:
            raise InvalidParam("tau must be > 0 and lam, eta >= 0")
        if not self.learning_rate > 0:
            raise InvalidParam("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidParam("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidParam("weight_decay must be >= 0")
        for name in ("M", "epochs_per_step", "batch_size", "hidden",
                     "refresh_pseudo", "refresh_prototypes", "refresh_centers"):
            if getattr(self, name) < 1:
                raise InvalidParam(f"{name} must be >= 1")
        if self.pretrain_epochs < 0:
            raise InvalidParam("pretrain_epochs must be >= 0")
        return self


@dataclass(frozen=True)
class StepDiagnostics:
    detected_shared: SharedClassSet
    pseudo_accuracy: float | None
    loss_curves: tuple            # one LossBreakdown per trained epoch
    bank_size_after: int
    warnings: tuple


def canonical_dataset(source: LabeledDataset) -> LabeledDataset:
    """Sort rows by (label, features) so input row order never matters."""
    X, y = source.features, source.labels
    keys = [X[:, i] for i in range(X.shape[1] - 1, -1, -1)] + [y]
    order = np.lexsort(tuple(keys))
    return LabeledDataset(X[order], y[order], source.K)


def canonical_step(step: StreamStep) -> StreamStep:
    """Sort rows by (features, hidden label)."""
    X, y = step.features, step.hidden_labels
    keys = [y.astype(np.float64)] + [X[:, i] for i in range(X.shape[1] - 1, -1, -1)]
    order = np.lexsort(tuple(keys))
    return StreamStep(X[order], y[order], step.true_classes)


class _SourceCursor:
    """Endless deterministic supply of source indices (re-permuted on demand)."""

    def __init__(self, n: int, rng: RngStream):
        self._n = n
        self._rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def take(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            if self._pos == self._n:
                self._perm = self._rng.permutation(self._n)
                self._pos = 0
            grab = min(count - filled, self._n - self._pos)
            out[filled:filled + grab] = self._perm[self._pos:self._pos + grab]
            self._pos += grab
            filled += grab
        return out


def pretrain_source(source: LabeledDataset, hp: HyperParams,
                    rng: RngStream) -> ModelParams:
    """Minimize source cross-entropy over shuffled mini-batches."""
    hp.validate()
    present = set(int(v) for v in np.unique(source.labels))
    missing = set(range(source.K)) - present
    if missing:
        raise IncompleteSource(f"source lacks classes {sorted(missing)}")
    params = init_params(source.d, hp.hidden, source.K, rng.child("init"))
    state = init_sgd_state(params.as_dict(), hp.learning_rate, hp.momentum,
                           hp.weight_decay)
    shuffle = rng.child("shuffle")
    n = source.n
    for _ in range(hp.pretrain_epochs):
        order = shuffle.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            trace = forward(params, source.features[idx])
            _, d_logits = ce_loss(trace.logits, source.labels[idx])
            grads = backward(params, trace, d_logits, None)
            blocks, state = sgd_momentum_step(params.as_dict(), grads, state)
            params = params_from_dict(blocks)
    return params


def _detect(params, X_t, hp: HyperParams, caught: list):
    cp = cumulative_probabilities(params, X_t)
    if hp.method == "no_scd":
        K = cp.normalized.size
        return cp, SharedClassSet(tuple(range(K)), 0.0, "none")
    if hp.method == "hbw":
        try:
            return cp, hbw_threshold(cp)
        except DegenerateDetection as exc:
            caught.append(str(exc))
            return cp, SharedClassSet((), float("nan"), "hbw")
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        shared = detect_shared(cp, hp.alpha)
    caught.extend(str(w.message) for w in rec)
    return cp, shared


def _labeling_accuracy(labeling, step: StreamStep) -> float | None:
    if (step.hidden_labels < 0).any():
        return None
    return accuracy(labeling.assignments, step.hidden_labels)


def adapt_step(params: ModelParams, bank: PrototypeBank,
               source: LabeledDataset, target: StreamStep, hp: HyperParams,
               rng: RngStream):
    """One time step of continual adaptation; returns new params, bank,
    diagnostics.  Only the current target batch is visible here."""
    hp.validate()
    if target.features.shape[0] == 0:
        raise EmptyInput("target batch is empty")
    if bank.capacity_M != hp.M:
        raise InvalidParam(f"bank capacity {bank.capacity_M} != hp.M {hp.M}")

    caught: list = []
    X_t = target.features
    cp, shared = _detect(params, X_t, hp, caught)

    if hp.method == "source_only":
        diag = StepDiagnostics(shared, None, (), bank.size, tuple(caught))
        return params, bank, diag

    if not shared.classes:
        caught.append("no shared classes detected; step skipped")
        diag = StepDiagnostics(shared, None, (), bank.size, tuple(caught))
        return params, bank, diag

    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        labeling = pseudo_label_pipeline(params, X_t, shared)

        pseudo_acc = _labeling_accuracy(labeling, target)

        # expand the bank for new classes, score-gated update for known ones
        for k in shared.classes:
            members = labeling.assignments == k
            if not members.any():
                caught.append(f"detected class {k} received no pseudo labels")
                continue
            X_k = X_t[members]
            cp_k = float(cp.normalized[k])
            if k not in bank.seen_classes:
                idx = herd_select(X_k, params, hp.M)
                bank = insert_class(bank, k, X_k[idx], params, cp_k)
            else:
                bank, _ = maybe_update_class(bank, k, cp_k, X_k, params)

        centers = source_centers(params, source)
        state = init_sgd_state(params.as_dict(), hp.learning_rate, hp.momentum,
                               hp.weight_decay)
        shuffle = rng.child("shuffle")
        src_cursor = _SourceCursor(source.n, rng.child("source_shuffle"))
        n_t = X_t.shape[0]
        half = max(1, hp.batch_size // 2)
        proto_terms = hp.use_con or hp.use_dis

        curves = []
        for epoch in range(1, hp.epochs_per_step + 1):
            if epoch % hp.refresh_pseudo == 0:
                labeling = pseudo_label_pipeline(params, X_t, shared)
            if epoch % hp.refresh_prototypes == 0:
                for k in sorted(bank.seen_classes):
                    members = labeling.assignments == k
                    if members.any():
                        bank = refresh_class(bank, k, X_t[members], params)
            if epoch % hp.refresh_centers == 0:
                centers = source_centers(params, source)

            t_order = shuffle.permutation(n_t)
            sums = np.zeros(3)
            n_batches = math.ceil(n_t / half)
            for b in range(n_batches):
                t_idx = t_order[b * half:(b + 1) * half]
                s_idx = src_cursor.take(hp.batch_size - t_idx.size)
                X_ce = np.vstack([source.features[s_idx], X_t[t_idx]])
                y_ce = np.concatenate([source.labels[s_idx],
                                       labeling.assignments[t_idx]])
                trace = forward(params, X_ce)
                ce_val, d_logits = ce_loss(trace.logits, y_ce)
                grads = backward(params, trace, d_logits, None)

                con_val = dis_val = 0.0
                if proto_terms and bank.size > 0:
                    P, H, proto_labels = bank_tensors(bank)
                    ptrace = forward(params, P)
                    d_plogits = d_pfeat = None
                    if hp.use_con:
                        con_val, dV, _ = con_loss(
                            ptrace.features, proto_labels, centers, hp.tau,
                            normalize_features=hp.normalize_features)
                        d_pfeat = hp.lam * dV
                    if hp.use_dis:
                        dis_val, d_pl = dis_loss(ptrace.probabilities, H)
                        d_plogits = hp.eta * d_pl
                    pgrads = backward(params, ptrace, d_plogits, d_pfeat)
                    grads = {k: grads[k] + pgrads[k] for k in grads}

                blocks, state = sgd_momentum_step(params.as_dict(), grads, state)
                params = params_from_dict(blocks)
                sums += (ce_val, con_val, dis_val)

            mean_ce, mean_con, mean_dis = sums / n_batches
            curves.append(total_loss(mean_ce, mean_con, mean_dis,
                                     hp.lam, hp.eta))

    caught.extend(str(w.message) for w in rec)
    diag = StepDiagnostics(shared, pseudo_acc, tuple(curves), bank.size,
                           tuple(caught))
    return params, bank, diag


def _loss_summary(diag: StepDiagnostics) -> dict | None:
    if not diag.loss_curves:
        return None
    first, last = diag.loss_curves[0], diag.loss_curves[-1]
    return {"first_epoch_total": first.total, "last_epoch_total": last.total,
            "ce": last.ce, "con": last.con, "dis": last.dis}


def run_stream(source: LabeledDataset, stream: IncrementalStream,
               hp: HyperParams, params: ModelParams | None = None,
               checkpoint_dir=None, config_echo: dict | None = None) -> RunReport:
    """Pretrain (or reuse) the source model, fold adapt_step over the stream,
    and score every step on the union of target data seen so far."""
    hp.validate()
    if len(stream.steps) < 1:
        raise EmptyInput("stream has no steps")
    source = canonical_dataset(source)
    stream = IncrementalStream(
        steps=tuple(canonical_step(s) for s in stream.steps),
        K=stream.K, d=stream.d)

    root = RngStream(hp.seed, "run")
    if params is None:
        params = pretrain_source(source, hp, root.child("pretrain"))

    bank = empty_bank(hp.M)
    per_step = []
    s1_first: float | None = None
    for t, step in enumerate(stream.steps, start=1):
        params, bank, diag = adapt_step(params, bank, source, step, hp,
                                        root.child(f"step{t}"))
        acc_t = step_level_accuracy(params, stream, t)
        s1_t = s1_accuracy(params, stream, t)
        if t == 1:
            s1_first = s1_t
        scd = tcd = 0.0
        if step.true_classes:
            hits = len(diag.detected_shared.as_set() & set(step.true_classes))
            scd = hits / len(step.true_classes)
            tcd = (hits / len(diag.detected_shared.classes)
                   if diag.detected_shared.classes else 0.0)
        drop = None
        if s1_first is not None and s1_t is not None:
            drop = s1_first - s1_t
        per_step.append(StepMetrics(
            step_index=t,
            step_level_accuracy=acc_t,
            s1_accuracy=s1_t,
            scd_accuracy=scd,
            tcd_accuracy=tcd,
            accuracy_drop_from_step1=drop,
            loss_summary=_loss_summary(diag),
            detected_classes=diag.detected_shared.classes,
            pseudo_accuracy=diag.pseudo_accuracy,
            bank_size_after=diag.bank_size_after,
            warnings=diag.warnings,
        ))
        if checkpoint_dir is not None:
            from pathlib import Path
            ckpt = Path(checkpoint_dir)
            ckpt.mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, ckpt / f"model_step{t}.json")
            save_bank(bank, ckpt / f"bank_step{t}.json")

    last = per_step[-1]
    return RunReport(per_step=tuple(per_step),
                     final_accuracy=last.step_level_accuracy,
                     final_s1_accuracy=last.s1_accuracy,
                     config_echo=config_echo or {"hyperparams": hp_to_dict(hp)},
                     seed=hp.seed,
                     backend=_kernels.BACKEND)


def hp_to_dict(hp: HyperParams) -> dict:
    return {
        "lambda": hp.lam, "eta": hp.eta, "alpha": hp.alpha, "M": hp.M,
        "tau": hp.tau, "epochs_per_step": hp.epochs_per_step,
        "pretrain_epochs": hp.pretrain_epochs, "batch_size": hp.batch_size,
        "hidden": hp.hidden, "learning_rate": hp.learning_rate,
        "momentum": hp.momentum, "weight_decay": hp.weight_decay,
        "refresh_pseudo": hp.refresh_pseudo,
        "refresh_prototypes": hp.refresh_prototypes,
        "refresh_centers": hp.refresh_centers, "seed": hp.seed,
        "method": hp.method, "use_con": hp.use_con, "use_dis": hp.use_dis,
        "normalize_features": hp.normalize_features,
    }


def hp_from_dict(payload: dict, prefix: str = "hyperparams") -> HyperParams:
    """Build HyperParams from a JSON dict, rejecting unknown keys."""
    mapping = {"lambda": "lam"}
    kwargs = {}
    valid = set(HyperParams.__dataclass_fields__)
    for key, value in payload.items():
        field = mapping.get(key, key)
        if field not in valid:
            raise InvalidParam(f"{prefix}.{key}: unknown hyperparameter")
        kwargs[field] = value
    try:
        hp = HyperParams(**kwargs)
    except TypeError as exc:
        raise InvalidParam(f"{prefix}: {exc}") from None
    return hp.validate()


def with_overrides(hp: HyperParams, **overrides) -> HyperParams:
    return replace(hp, **overrides).validate()
