"""Run metrics and report serialization.

Step-level accuracy is computed transductively over the union of target data
from steps 1..t (the evaluator retains earlier steps; the trainer never sees
them).  Step-1 accuracy restricts that union to samples whose hidden truth is
a step-1 class, and the drop curve is s1(1) - s1(t).  Detection quality is
scored as recall (SCD) and precision (TCD) of the detected class set.
Predictions are always the argmax over all K classifier outputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import IncrementalStream
from .errors import InvalidInput, InvalidShape, InvalidStep
from .model import ModelParams, forward


@dataclass(frozen=True)
class StepMetrics:
    step_index: int
    step_level_accuracy: float | None
    s1_accuracy: float | None
    scd_accuracy: float
    tcd_accuracy: float
    accuracy_drop_from_step1: float | None
    loss_summary: dict | None
    detected_classes: tuple
    pseudo_accuracy: float | None
    bank_size_after: int
    warnings: tuple = ()


@dataclass(frozen=True)
class RunReport:
    per_step: tuple
    final_accuracy: float | None
    final_s1_accuracy: float | None
    config_echo: dict
    seed: int
    backend: str

    def __post_init__(self):
        if self.per_step:
            last = self.per_step[-1]
            if last.step_level_accuracy != self.final_accuracy:
                raise InvalidInput("final_accuracy must equal the last "
                                   "step-level accuracy")
            if last.s1_accuracy != self.final_s1_accuracy:
                raise InvalidInput("final_s1_accuracy must equal the last "
                                   "s1 accuracy")


def accuracy(predictions, truth) -> float:
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1 or p.size == 0:
        raise InvalidShape(f"prediction/truth shapes {p.shape} vs {t.shape}")
    return float((p == t).mean())


def _union_upto(stream: IncrementalStream, t: int):
    if not 1 <= t <= len(stream.steps):
        raise InvalidStep(f"step {t} outside 1..{len(stream.steps)}")
    X = np.vstack([s.features for s in stream.steps[:t]])
    y = np.concatenate([s.hidden_labels for s in stream.steps[:t]])
    return X, y


def predict(params: ModelParams, X) -> np.ndarray:
    return forward(params, X).logits.argmax(axis=1)


def step_level_accuracy(params: ModelParams, stream: IncrementalStream,
                        t: int) -> float | None:
    """Accuracy over all target samples observed in steps 1..t."""
    X, y = _union_upto(stream, t)
    if (y < 0).any():
        return None
    return accuracy(predict(params, X), y)


def s1_accuracy(params: ModelParams, stream: IncrementalStream,
                t: int) -> float | None:
    """Accuracy at time t restricted to samples of step-1 classes."""
    X, y = _union_upto(stream, t)
    if (y < 0).any():
        return None
    step1 = set(stream.steps[0].true_classes)
    mask = np.isin(y, sorted(step1))
    return accuracy(predict(params, X[mask]), y[mask])


def scd_tcd(detected, truth):
    """(recall, precision) of the detected shared-class set."""
    detected = set(int(k) for k in detected)
    truth = set(int(k) for k in truth)
    if not truth:
        raise InvalidInput("truth class set is empty")
    hits = len(detected & truth)
    scd = hits / len(truth)
    tcd = hits / len(detected) if detected else 0.0
    return scd, tcd


_CSV_METRICS = ("step_level_accuracy", "s1_accuracy", "scd_accuracy",
                "tcd_accuracy", "accuracy_drop_from_step1")


def report_to_dict(report: RunReport) -> dict:
    return {
        "config_echo": report.config_echo,
        "seed": report.seed,
        "backend": report.backend,
        "per_step": [
            {
                "step_index": s.step_index,
                "step_level_accuracy": s.step_level_accuracy,
                "s1_accuracy": s.s1_accuracy,
                "scd_accuracy": s.scd_accuracy,
                "tcd_accuracy": s.tcd_accuracy,
                "accuracy_drop_from_step1": s.accuracy_drop_from_step1,
                "loss_summary": s.loss_summary,
                "detected_classes": list(s.detected_classes),
                "pseudo_accuracy": s.pseudo_accuracy,
                "bank_size_after": s.bank_size_after,
                "warnings": list(s.warnings),
            }
            for s in report.per_step
        ],
        "final_accuracy": report.final_accuracy,
        "final_s1_accuracy": report.final_s1_accuracy,
    }


def report_from_dict(payload: dict) -> RunReport:
    steps = tuple(
        StepMetrics(
            step_index=s["step_index"],
            step_level_accuracy=s["step_level_accuracy"],
            s1_accuracy=s["s1_accuracy"],
            scd_accuracy=s["scd_accuracy"],
            tcd_accuracy=s["tcd_accuracy"],
            accuracy_drop_from_step1=s["accuracy_drop_from_step1"],
            loss_summary=s["loss_summary"],
            detected_classes=tuple(s["detected_classes"]),
            pseudo_accuracy=s["pseudo_accuracy"],
            bank_size_after=s["bank_size_after"],
            warnings=tuple(s["warnings"]),
        )
        for s in payload["per_step"]
    )
    return RunReport(per_step=steps,
                     final_accuracy=payload["final_accuracy"],
                     final_s1_accuracy=payload["final_s1_accuracy"],
                     config_echo=payload["config_echo"],
                     seed=payload["seed"],
                     backend=payload["backend"])


def emit_report(report: RunReport, out_dir):
    """Write report.json plus metrics.csv (long format: step,metric,value)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    json_path.write_text(json.dumps(report_to_dict(report), indent=2,
                                    sort_keys=True) + "\n")
    csv_path = out / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "metric", "value"])
        for s in report.per_step:
            for metric in _CSV_METRICS:
                value = getattr(s, metric)
                writer.writerow([s.step_index, metric,
                                 "" if value is None else repr(float(value))])
    return json_path, csv_path
