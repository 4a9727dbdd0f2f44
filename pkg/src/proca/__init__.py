"""Prototype-guided continual adaptation for class-incremental unsupervised
domain adaptation.

The package trains a small dense model on a labeled source domain and adapts
it to an unlabeled target domain whose classes arrive in disjoint groups over
time.  Each step detects the shared classes via cumulative prediction
probabilities, pseudo-labels the batch by nearest-centroid clustering over
the detected classes, stores herding-selected prototypes with frozen soft
labels in a memory bank, and optimizes cross-entropy plus prototype-based
contrastive alignment and distillation replay.
"""

from ._kernels import BACKEND
from .bank import PrototypeBank, empty_bank
from .data import IncrementalStream, LabeledDataset, SynthConfig, gen_synthetic
from .detector import (CumulativeProbs, SharedClassSet,
                       cumulative_probabilities, detect_shared, hbw_threshold)
from .evaluation import RunReport, emit_report, scd_tcd
from .model import ModelParams, forward, init_params
from .rng import RngStream
from .trainer import HyperParams, adapt_step, pretrain_source, run_stream

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CumulativeProbs",
    "HyperParams",
    "IncrementalStream",
    "LabeledDataset",
    "ModelParams",
    "PrototypeBank",
    "RngStream",
    "RunReport",
    "SharedClassSet",
    "SynthConfig",
    "adapt_step",
    "cumulative_probabilities",
    "detect_shared",
    "emit_report",
    "empty_bank",
    "forward",
    "gen_synthetic",
    "hbw_threshold",
    "init_params",
    "pretrain_source",
    "run_stream",
    "scd_tcd",
]
