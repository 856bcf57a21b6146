"""Remix-SNR sweep: regenerate, fine-tune, evaluate per SNR range."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import replace
from pathlib import Path

from .data import data_root
from .evaluate import evaluate_records
from .checkpoint import load_checkpoint
from .simulate import RecipeConfig, build_manifest, load_manifest
from .train import TrainConfig, finetune

logger = logging.getLogger(__name__)

SWEEP_JSON = "sweep.json"
SWEEP_CSV = "sweep.csv"


def _write_rows(rows: list[dict], out_dir: Path) -> None:
    (out_dir / SWEEP_JSON).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    with (out_dir / SWEEP_CSV).open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["snr_lo", "snr_hi", "sisnr", "sisnri"])
        writer.writeheader()
        writer.writerows(rows)


def snr_sweep(checkpoint_path, ranges: list[tuple[float, float]],
              speech_root, mixture_root, eval_manifest, recipe: RecipeConfig,
              train_cfg: TrainConfig, out_dir) -> list[dict]:
    """Fine-tune one base checkpoint per remixing SNR range and score each.

    For every range the remix manifest is regenerated, the checkpoint
    fine-tuned on it alone, and the result evaluated on the target dev
    manifest. The range-to-SISNR table is rewritten after every
    completed range, so a failing stage leaves partial results on disk.
    """
    if len(ranges) < 2:
        raise ValueError("a sweep needs at least 2 SNR ranges")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_records = load_manifest(eval_manifest)
    eval_root = data_root(eval_manifest)

    rows: list[dict] = []
    for lo, hi in ranges:
        tag = f"snr_{lo:g}_{hi:g}"
        logger.info("sweep range [%g, %g] dB", lo, hi)
        range_dir = out_dir / tag
        manifest = build_manifest(
            "remix", range_dir / "data",
            replace(recipe, remix_snr_range=(float(lo), float(hi))),
            speech_root=speech_root, mixture_root=mixture_root,
        )
        remix_records = load_manifest(manifest)
        cfg = replace(train_cfg, checkpoint_dir=str(range_dir / "checkpoints"))
        result = finetune(checkpoint_path, cfg, remix_records, None,
                          eval_records, data_root(manifest), dev_root=eval_root)
        ckpt = load_checkpoint(result.best_path)
        model = ckpt.build_model()
        model.eval()
        report = evaluate_records(model, "tse", eval_records, eval_root)
        rows.append({
            "snr_lo": float(lo),
            "snr_hi": float(hi),
            "sisnr": report.mean_sisnr,
            "sisnri": report.mean_sisnri,
        })
        _write_rows(rows, out_dir)
    return rows
