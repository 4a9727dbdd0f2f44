"""Experiment configuration: JSON schema, validation, and echo.

A config names exactly one dataset source (an inline synthetic spec or a
stream manifest path) plus hyperparameters; every hyperparameter defaults to
the standard setting, so an empty "hyperparams" block reproduces it.
Validation happens before any computation and failures carry the offending
field path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .data import SynthConfig
from .errors import InvalidConfig, InvalidParam
from .trainer import HyperParams, hp_from_dict, hp_to_dict


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: SynthConfig | None
    files: str | None
    hyperparams: HyperParams
    output_dir: str = "out"
    model_checkpoint: str | None = None
    checkpoint_dir: str | None = None
    seeds: tuple | None = None

    def validate(self) -> "ExperimentConfig":
        if (self.synthetic is None) == (self.files is None):
            raise InvalidConfig(
                "dataset: exactly one of 'synthetic' or 'files' is required")
        if self.synthetic is not None:
            try:
                self.synthetic.validate()
            except InvalidConfig as exc:
                raise InvalidConfig(f"dataset.synthetic: {exc}") from None
        self.hyperparams.validate()
        if self.seeds is not None and len(self.seeds) == 0:
            raise InvalidConfig("seeds: must be a non-empty list when present")
        return self


def _synth_from_dict(payload: dict) -> SynthConfig:
    valid = {f.name for f in fields(SynthConfig)}
    unknown = set(payload) - valid
    if unknown:
        raise InvalidConfig(
            f"dataset.synthetic.{sorted(unknown)[0]}: unknown field")
    try:
        return SynthConfig(**payload)
    except TypeError as exc:
        raise InvalidConfig(f"dataset.synthetic: {exc}") from None


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise InvalidConfig("config root must be a JSON object")
    known = {"dataset", "hyperparams", "output_dir", "model_checkpoint",
             "checkpoint_dir", "seeds"}
    unknown = set(payload) - known
    if unknown:
        raise InvalidConfig(f"{sorted(unknown)[0]}: unknown field")

    dataset = payload.get("dataset")
    if not isinstance(dataset, dict):
        raise InvalidConfig("dataset: required object with 'synthetic' or 'files'")
    bad = set(dataset) - {"synthetic", "files"}
    if bad:
        raise InvalidConfig(f"dataset.{sorted(bad)[0]}: unknown field")
    synthetic = None
    if "synthetic" in dataset:
        if not isinstance(dataset["synthetic"], dict):
            raise InvalidConfig("dataset.synthetic: must be an object")
        synthetic = _synth_from_dict(dataset["synthetic"])
    files = dataset.get("files")
    if files is not None and not isinstance(files, str):
        raise InvalidConfig("dataset.files: must be a manifest path string")

    hp_payload = payload.get("hyperparams", {})
    if not isinstance(hp_payload, dict):
        raise InvalidConfig("hyperparams: must be an object")
    try:
        hp = hp_from_dict(hp_payload)
    except InvalidParam as exc:
        raise InvalidConfig(str(exc)) from None

    seeds = payload.get("seeds")
    if seeds is not None:
        if (not isinstance(seeds, list)
                or not all(isinstance(s, int) for s in seeds)):
            raise InvalidConfig("seeds: must be a list of integers")
        seeds = tuple(seeds)

    cfg = ExperimentConfig(
        synthetic=synthetic,
        files=files,
        hyperparams=hp,
        output_dir=payload.get("output_dir", "out"),
        model_checkpoint=payload.get("model_checkpoint"),
        checkpoint_dir=payload.get("checkpoint_dir"),
        seeds=seeds,
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise InvalidConfig(f"config file not found: {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{p}: invalid JSON ({exc})") from None
    return config_from_dict(payload)


def config_echo(cfg: ExperimentConfig) -> dict:
    """Self-describing copy of the configuration for embedding in reports."""
    dataset: dict = {}
    if cfg.synthetic is not None:
        dataset["synthetic"] = {
            f.name: getattr(cfg.synthetic, f.name) for f in fields(SynthConfig)
        }
    if cfg.files is not None:
        dataset["files"] = cfg.files
    return {
        "dataset": dataset,
        "hyperparams": hp_to_dict(cfg.hyperparams),
        "output_dir": cfg.output_dir,
        "model_checkpoint": cfg.model_checkpoint,
        "checkpoint_dir": cfg.checkpoint_dir,
    }
