"""Command-line entry point.

Subcommands:
  synth      write a synthetic dataset (CSVs + stream manifest)
  pretrain   train the source model and save its checkpoint
  run        full class-incremental adaptation run -> report.json/metrics.csv
  eval       recompute metrics for a saved model on a dataset
  gradcheck  finite-difference audit of every analytic gradient

Exit codes: 0 success, 1 configuration error, 2 runtime error.  All
randomness flows from --seed (which overrides the config's training seed
and, for synthetic datasets, the generator seed).  PROCA_LOG selects the
diagnostics verbosity (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import _kernels
from .config import ExperimentConfig, config_echo, load_config
from .data import gen_synthetic, load_manifest, write_dataset
from .detector import cumulative_probabilities, detect_shared, hbw_threshold
from .errors import InvalidConfig, ProcaError
from .evaluation import (RunReport, StepMetrics, emit_report, s1_accuracy,
                         scd_tcd, step_level_accuracy)
from .gradcheck import run_suite
from .model import load_checkpoint, save_checkpoint
from .trainer import pretrain_source, run_stream, with_overrides
from .rng import RngStream

log = logging.getLogger("proca")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


class _CliParser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message):
        raise InvalidConfig(message)


def _build_parser() -> _CliParser:
    parser = _CliParser(prog="proca", description=__doc__,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "pretrain", "run", "eval", "gradcheck"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="experiment config JSON (optional for gradcheck)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        if name == "run":
            p.add_argument("--method", default=None,
                           choices=["proca", "source_only", "no_scd", "hbw"])
            p.add_argument("--no-con", action="store_true")
            p.add_argument("--no-dis", action="store_true")
            p.add_argument("--no-scd", action="store_true")
            p.add_argument("--hbw", action="store_true")
            p.add_argument("--checkpoint-dir", default=None)
            p.add_argument("--jobs", type=int, default=1)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    hp = cfg.hyperparams
    if args.seed is not None:
        hp = with_overrides(hp, seed=args.seed)
    method = getattr(args, "method", None)
    if getattr(args, "no_scd", False):
        method = "no_scd"
    if getattr(args, "hbw", False):
        method = "hbw"
    if method is not None:
        hp = with_overrides(hp, method=method)
    if getattr(args, "no_con", False):
        hp = with_overrides(hp, use_con=False)
    if getattr(args, "no_dis", False):
        hp = with_overrides(hp, use_dis=False)

    synthetic = cfg.synthetic
    if synthetic is not None and args.seed is not None:
        synthetic = replace(synthetic, seed=args.seed)

    out = args.out if args.out is not None else cfg.output_dir
    ckpt = getattr(args, "checkpoint_dir", None)
    if ckpt is None:
        ckpt = cfg.checkpoint_dir
    if ckpt is not None and not os.path.isabs(ckpt):
        ckpt = str(Path(out) / ckpt)
    return replace(cfg, hyperparams=hp, synthetic=synthetic, output_dir=out,
                   checkpoint_dir=ckpt).validate()


def _load_dataset(cfg: ExperimentConfig):
    if cfg.synthetic is not None:
        log.info("generating synthetic dataset (seed %d)", cfg.synthetic.seed)
        return gen_synthetic(cfg.synthetic)
    log.info("loading manifest %s", cfg.files)
    return load_manifest(cfg.files)


def _require_config(args) -> ExperimentConfig:
    if args.config is None:
        raise InvalidConfig("--config PATH is required for this subcommand")
    return _apply_overrides(load_config(args.config), args)


def _cmd_synth(args) -> int:
    cfg = _require_config(args)
    if cfg.synthetic is None:
        raise InvalidConfig("dataset.synthetic: required for the synth command")
    source, stream = gen_synthetic(cfg.synthetic)
    manifest = write_dataset(source, stream, cfg.output_dir)
    print(manifest)
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _require_config(args)
    source, _ = _load_dataset(cfg)
    hp = cfg.hyperparams
    params = pretrain_source(source, hp, RngStream(hp.seed, "run").child("pretrain"))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.json"
    save_checkpoint(params, path)
    print(path)
    return 0


def _run_once(cfg: ExperimentConfig) -> Path:
    source, stream = _load_dataset(cfg)
    params = None
    if cfg.model_checkpoint is not None:
        log.info("loading model checkpoint %s", cfg.model_checkpoint)
        params = load_checkpoint(cfg.model_checkpoint)
    report = run_stream(source, stream, cfg.hyperparams, params=params,
                        checkpoint_dir=cfg.checkpoint_dir,
                        config_echo=config_echo(cfg))
    json_path, _ = emit_report(report, cfg.output_dir)
    return json_path


def _sweep_worker(payload):
    cfg, seed = payload
    hp = with_overrides(cfg.hyperparams, seed=seed)
    synthetic = cfg.synthetic
    if synthetic is not None:
        synthetic = replace(synthetic, seed=seed)
    sub = replace(cfg, hyperparams=hp, synthetic=synthetic,
                  output_dir=str(Path(cfg.output_dir) / f"seed_{seed}"),
                  seeds=None)
    return str(_run_once(sub))


def _cmd_run(args) -> int:
    cfg = _require_config(args)
    if cfg.seeds is not None:
        jobs = max(1, getattr(args, "jobs", 1))
        work = [(cfg, seed) for seed in cfg.seeds]
        if jobs == 1:
            paths = [_sweep_worker(w) for w in work]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                paths = list(pool.map(_sweep_worker, work))
        for p in paths:
            print(p)
        return 0
    print(_run_once(cfg))
    return 0


def _cmd_eval(args) -> int:
    cfg = _require_config(args)
    if cfg.model_checkpoint is None:
        raise InvalidConfig("model_checkpoint: required for the eval command")
    params = load_checkpoint(cfg.model_checkpoint)
    _, stream = _load_dataset(cfg)
    hp = cfg.hyperparams
    per_step = []
    s1_first = None
    for t, step in enumerate(stream.steps, start=1):
        cp = cumulative_probabilities(params, step.features)
        detected = (hbw_threshold(cp) if hp.method == "hbw"
                    else detect_shared(cp, hp.alpha))
        scd, tcd = scd_tcd(detected.as_set(), set(step.true_classes))
        acc_t = step_level_accuracy(params, stream, t)
        s1_t = s1_accuracy(params, stream, t)
        if t == 1:
            s1_first = s1_t
        drop = None if (s1_first is None or s1_t is None) else s1_first - s1_t
        per_step.append(StepMetrics(
            step_index=t, step_level_accuracy=acc_t, s1_accuracy=s1_t,
            scd_accuracy=scd, tcd_accuracy=tcd,
            accuracy_drop_from_step1=drop, loss_summary=None,
            detected_classes=detected.classes, pseudo_accuracy=None,
            bank_size_after=0))
    last = per_step[-1]
    report = RunReport(per_step=tuple(per_step),
                       final_accuracy=last.step_level_accuracy,
                       final_s1_accuracy=last.s1_accuracy,
                       config_echo=config_echo(cfg), seed=hp.seed,
                       backend=_kernels.BACKEND)
    json_path, _ = emit_report(report, cfg.output_dir)
    print(json_path)
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_suite(seed=seed, instances=100)
    for name in ("ce", "con", "dis", "model", "composite"):
        print(f"{name}: max relative error {results[name]:.3e}")
    print(f"max: {results['max']:.3e}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.json").write_text(json.dumps(results, indent=2,
                                                       sort_keys=True))
    return 0 if results["max"] <= 1e-4 else 2


_COMMANDS = {"synth": _cmd_synth, "pretrain": _cmd_pretrain, "run": _cmd_run,
             "eval": _cmd_eval, "gradcheck": _cmd_gradcheck}


def main(argv=None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("PROCA_LOG", "warn").lower(),
                            logging.WARNING)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ProcaError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
