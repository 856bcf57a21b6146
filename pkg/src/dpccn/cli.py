"""Command-line interface.

Subcommands: simulate, stats, train, finetune, evaluate, infer, sweep.
Configuration values come from layered YAML files (later files override
earlier ones) with explicit command-line flags taking final precedence;
the documented keys are the TrainConfig / RecipeConfig fields plus an
optional ``model:`` section of DpccnConfig fields. Record paths resolve
against each manifest's directory unless DPCCN_DATA_ROOT is set.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields as dataclass_fields, replace as dataclass_replace
from pathlib import Path

import yaml

from .checkpoint import load_checkpoint
from .data import data_root, mvn_from_records
from .dsp import StftConfig
from .errors import DataError, TrainingDivergedError
from .evaluate import evaluate, infer
from .model import DpccnConfig
from .simulate import RecipeConfig, build_manifest, load_manifest
from .sweep import snr_sweep
from .train import TrainConfig, finetune, resume, train

logger = logging.getLogger(__name__)


def _load_layered(paths: list[str] | None) -> dict:
    merged: dict = {}
    for path in paths or []:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: config file must be a mapping")
        merged.update(loaded)
    return merged


def _from_mapping(cls, mapping: dict, overrides: dict):
    """Build a config dataclass from file values plus CLI overrides."""
    names = {f.name for f in dataclass_fields(cls)}
    kwargs = {k: v for k, v in mapping.items() if k in names}
    kwargs.update({k: v for k, v in overrides.items() if k in names and v is not None})
    for key in ("pair_snr_range", "remix_snr_range", "adam_betas"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def _model_config(file_cfg: dict) -> DpccnConfig:
    section = dict(file_cfg.get("model") or {})
    if "stft" in section:
        section["stft"] = StftConfig(**section["stft"])
    for key in ("encoder_channels", "encoder_freq_strides", "pyramid_scales"):
        if key in section:
            section[key] = tuple(section[key])
    return DpccnConfig(**section)


def _parse_ranges(text: str) -> list[tuple[float, float]]:
    ranges = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        ranges.append((float(lo), float(hi)))
    return ranges


# -- subcommand handlers -----------------------------------------------------

def _cmd_simulate(args, parser):
    file_cfg = _load_layered(args.recipe)
    recipe = _from_mapping(RecipeConfig, file_cfg, {
        "seed": args.seed,
        "sample_rate": args.sample_rate,
        "clamp_duration_s": args.clamp_duration,
        "pair_snr_range": (args.snr_range and _parse_ranges(args.snr_range)[0]),
        "remix_snr_range": (args.remix_snr_range and _parse_ranges(args.remix_snr_range)[0]),
    })
    manifest = build_manifest(args.mode, args.out, recipe,
                              speech_root=args.speech, mixture_root=args.mixtures,
                              num_mixtures=args.num)
    print(manifest)
    return 0


def _cmd_stats(args, parser):
    records = load_manifest(args.manifest)
    stft_cfg = StftConfig(fft_size=args.fft_size, hop_size=args.hop_size)
    stats = mvn_from_records(records, data_root(args.manifest), stft_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"fft_size": stft_cfg.fft_size, "hop_size": stft_cfg.hop_size}
    payload.update(stats.to_dict())
    out.write_text(json.dumps(payload) + "\n", encoding="utf-8")
    print(out)
    return 0


def _train_overrides(args) -> dict:
    return {
        "task": getattr(args, "task", None),
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "segment_s": args.segment,
        "seed": args.seed,
        "checkpoint_dir": args.checkpoint_dir,
        "max_steps": args.max_steps,
    }


def _cmd_train(args, parser):
    file_cfg = _load_layered(args.config)
    cfg = _from_mapping(TrainConfig, file_cfg, _train_overrides(args))
    train_records = load_manifest(args.train_manifest)
    dev_records = load_manifest(args.dev_manifest)
    root = data_root(args.train_manifest)
    dev_root = data_root(args.dev_manifest)
    if args.resume:
        result = resume(args.resume, cfg, train_records, dev_records, root,
                        dev_root=dev_root)
    else:
        model_cfg = _model_config(file_cfg)
        if cfg.task == "tse" and model_cfg.num_sources != 1:
            model_cfg = dataclass_replace(model_cfg, num_sources=1)
        result = train(model_cfg, cfg, train_records, dev_records, root,
                       dev_root=dev_root)
    print(result.best_path)
    return 0


def _cmd_finetune(args, parser):
    file_cfg = _load_layered(args.config)
    overrides = _train_overrides(args)
    overrides["task"] = "tse"
    cfg = _from_mapping(TrainConfig, file_cfg, overrides)
    remix_records = load_manifest(args.remix_manifest)
    source_records = load_manifest(args.source_manifest) if args.source_manifest else None
    dev_records = load_manifest(args.dev_manifest)
    if source_records and data_root(args.source_manifest) != data_root(args.remix_manifest):
        parser.error("remix and source manifests must share a data root "
                     "(set DPCCN_DATA_ROOT or co-locate them)")
    result = finetune(args.checkpoint, cfg, remix_records, source_records,
                      dev_records, data_root(args.remix_manifest),
                      dev_root=data_root(args.dev_manifest))
    print(result.best_path)
    return 0


def _cmd_evaluate(args, parser):
    manifests = {}
    for item in args.manifest:
        name, _, path = item.partition("=")
        if not path:
            parser.error(f"--manifest takes name=path, got {item!r}")
        manifests[name] = Path(path)
    report = evaluate(args.checkpoint, manifests, source=args.source, target=args.target)
    print(report.format_table())
    if args.out:
        report.write(args.out)
    return 0


def _cmd_infer(args, parser):
    task = load_checkpoint(args.checkpoint).task
    if task == "tse" and not args.enroll:
        parser.error("this checkpoint extracts a target speaker; --enroll is required")
    sidecar = infer(args.checkpoint, args.mix, args.out, enroll_path=args.enroll,
                    reference_paths=args.reference or None)
    print(json.dumps(sidecar, indent=2))
    return 0


def _cmd_sweep(args, parser):
    file_cfg = _load_layered(args.config)
    overrides = _train_overrides(args)
    overrides["task"] = "tse"
    cfg = _from_mapping(TrainConfig, file_cfg, overrides)
    recipe = _from_mapping(RecipeConfig, file_cfg, {"seed": args.seed})
    ranges = _parse_ranges(args.ranges)
    rows = snr_sweep(args.checkpoint, ranges, args.speech, args.mixtures,
                     args.eval_manifest, recipe, cfg, args.out)
    for row in rows:
        print(f"[{row['snr_lo']:g}, {row['snr_hi']:g}] dB -> SISNR {row['sisnr']:.2f}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpccn",
        description="Speech separation and target speech extraction toolkit.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate mixture corpora and manifests")
    p.add_argument("--mode", required=True, choices=("ss", "tse", "remix"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speech", help="speaker-organized clean speech root")
    p.add_argument("--mixtures", help="unsupervised mixture directory (remix mode)")
    p.add_argument("--num", type=int, help="its record count (required for ss/tse)")
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--clamp-duration", type=float, dest="clamp_duration")
    p.add_argument("--snr-range", help="pair SNR interval lo:hi in dB")
    p.add_argument("--remix-snr-range", help="remix SNR interval lo:hi in dB")
    p.add_argument("--recipe", action="append", help="recipe YAML (repeatable, layered)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("stats", help="compute MVN statistics over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fft-size", type=int, default=512, dest="fft_size")
    p.add_argument("--hop-size", type=int, default=128, dest="hop_size")
    p.set_defaults(func=_cmd_stats)

    def add_train_flags(p, with_task=True):
        if with_task:
            p.add_argument("--task", choices=("ss", "tse"))
        p.add_argument("--config", action="append", help="config YAML (repeatable, layered)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float, dest="learning_rate")
        p.add_argument("--segment", type=float, help="training segment length in seconds")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-steps", type=int, dest="max_steps")
        p.add_argument("--checkpoint-dir", dest="checkpoint_dir")

    p = sub.add_parser("train", help="train a separation or extraction model")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--dev-manifest", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("finetune", help="Mixture-Remix fine-tuning of a tse checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--remix-manifest", required=True)
    p.add_argument("--source-manifest", help="optional source-domain manifest (union mode)")
    p.add_argument("--dev-manifest", required=True)
    add_train_flags(p, with_task=False)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("evaluate", help="score a checkpoint on named corpora")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   help="name=path (repeatable)")
    p.add_argument("--source", help="corpus name flagged as source domain")
    p.add_argument("--target", help="corpus name flagged as target domain")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("infer", help="separate or extract one mixture file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mix", required=True)
    p.add_argument("--enroll", help="enrollment WAV (required for tse checkpoints)")
    p.add_argument("--reference", action="append", help="reference WAV (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("sweep", help="fine-tune and score across remix SNR ranges")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--speech", required=True)
    p.add_argument("--mixtures", required=True)
    p.add_argument("--eval-manifest", required=True)
    p.add_argument("--ranges", required=True, help="comma-separated lo:hi intervals")
    p.add_argument("--out", required=True)
    add_train_flags(p, with_task=False)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args, parser)
    except TrainingDivergedError as exc:
        print(f"error: {exc} (diagnostic checkpoint: {exc.checkpoint_path})",
              file=sys.stderr)
        return 4
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
