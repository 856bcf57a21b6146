"""Versioned checkpoint container.

A checkpoint is a plain dict saved with ``torch.save`` holding:

* ``version``          format version (currently 1)
* ``task``             "ss" or "tse"
* ``config``           the architecture hyperparameters as a dict
* ``speaker_config``   speaker-encoder widths (TSE only)
* ``model_state``      network state dict, including the MVN buffers
* ``optimizer_state``  Adam state, or None for inference-only exports
* ``epoch``            last completed epoch
* ``best_dev_sisnr``   dev SISNR of the retained best model
* ``history``          per-epoch training curve records

Only tensors and builtin containers are stored, so files load under
``torch.load(weights_only=True)``. The layout is stable across minor
versions of the toolkit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .model import DPCCN, DpccnConfig
from .speaker import SDPCCN, SpeakerEncoderConfig

CHECKPOINT_VERSION = 1


def config_hash(config: DpccnConfig) -> str:
    """Stable digest of the architecture; fine-tuning must not change it."""
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    task: str
    config: DpccnConfig
    model_state: dict
    speaker_config: SpeakerEncoderConfig | None = None
    optimizer_state: dict | None = None
    epoch: int = 0
    best_dev_sisnr: float | None = None
    history: list[dict] = field(default_factory=list)
    version: int = CHECKPOINT_VERSION

    def build_model(self) -> DPCCN | SDPCCN:
        """Instantiate the network this checkpoint describes and load its weights."""
        if self.task == "tse":
            model = SDPCCN(self.config, self.speaker_config)
        else:
            model = DPCCN(self.config)
        model.load_state_dict(self.model_state)
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": ckpt.version,
        "task": ckpt.task,
        "config": ckpt.config.to_dict(),
        "speaker_config": (
            None if ckpt.speaker_config is None else vars(ckpt.speaker_config).copy()
        ),
        "model_state": ckpt.model_state,
        "optimizer_state": ckpt.optimizer_state,
        "epoch": ckpt.epoch,
        "best_dev_sisnr": ckpt.best_dev_sisnr,
        "history": ckpt.history,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    speaker_config = payload.get("speaker_config")
    return Checkpoint(
        task=payload["task"],
        config=DpccnConfig.from_dict(payload["config"]),
        speaker_config=(
            None if speaker_config is None else SpeakerEncoderConfig(**speaker_config)
        ),
        model_state=payload["model_state"],
        optimizer_state=payload["optimizer_state"],
        epoch=payload["epoch"],
        best_dev_sisnr=payload["best_dev_sisnr"],
        history=payload["history"],
        version=version,
    )
