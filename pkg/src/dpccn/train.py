"""Training and Mixture-Remix fine-tuning loops.

Optimization follows the published recipe: Adam at an initial rate of
1e-3 on 4-second segments, up to 100 epochs for training from scratch
and at most 20 for fine-tuning, negative SISNR with utterance-level
PIT for separation and plain negative SISNR for extraction. The
learning rate halves after 3 epochs without dev improvement and
training stops early after 6; gradients are clipped at global norm 5.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import TrainingSet, load_record_audio, mvn_from_records
from .errors import DataError, TrainingDivergedError
from .losses import tse_loss, upit_loss
from .metrics import score_separation
from .model import DPCCN, DpccnConfig
from .simulate import MixtureRecord
from .speaker import SDPCCN, SpeakerEncoderConfig

logger = logging.getLogger(__name__)

BEST_NAME = "best.pt"
LAST_NAME = "last.pt"
DIVERGED_NAME = "diverged.pt"
HISTORY_NAME = "history.jsonl"


@dataclass
class TrainConfig:
    task: str = "ss"
    epochs: int = 100
    batch_size: int = 4
    segment_s: float = 4.0
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    lr_halve_patience: int = 3
    early_stop_patience: int = 6
    finetune_max_epochs: int = 20
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    max_steps: int | None = None  # cap for smoke runs and tests

    def __post_init__(self):
        if self.task not in ("ss", "tse"):
            raise ValueError(f"task must be 'ss' or 'tse', got {self.task!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.segment_s <= 0:
            raise ValueError("segment_s must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainResult:
    best_path: Path
    last_path: Path
    best_dev_sisnr: float
    history: list[dict] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


def _make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                            betas=cfg.adam_betas, eps=cfg.adam_eps)


def _model_config(model) -> DpccnConfig:
    return model.cfg


def _speaker_config(model) -> SpeakerEncoderConfig | None:
    return model.speaker_encoder.cfg if isinstance(model, SDPCCN) else None


def evaluate_dev(model, records: list[MixtureRecord], root: Path, task: str) -> float:
    """Mean permutation-resolved SISNR over a dev manifest."""
    was_training = model.training
    model.eval()
    values = []
    with torch.no_grad():
        for record in records:
            audio = load_record_audio(record, root, need_enroll=task == "tse")
            if task == "tse":
                est = model.extract(audio["mix"], audio["enroll"])
                score = score_separation([est], [audio["refs"][record.target_index]],
                                         audio["mix"], record.id)
            else:
                ests = model.separate(audio["mix"])
                score = score_separation(ests, audio["refs"], audio["mix"], record.id)
            values.append(score.sisnr)
    model.train(was_training)
    return float(np.mean(values))


def _compute_loss(model, batch, task: str) -> torch.Tensor:
    if task == "tse":
        est = model(batch.mix, batch.enroll)
        return tse_loss(est, batch.refs[:, 0])
    return upit_loss(model(batch.mix), batch.refs).loss


def _checkpoint_of(model, optimizer, task, epoch, best_dev, history) -> Checkpoint:
    return Checkpoint(
        task=task,
        config=_model_config(model),
        speaker_config=_speaker_config(model),
        model_state=model.state_dict(),
        optimizer_state=optimizer.state_dict(),
        epoch=epoch,
        best_dev_sisnr=best_dev,
        history=history,
    )


def _fit(model, optimizer, cfg: TrainConfig, train_records, dev_records,
         root: Path, start_epoch: int, max_epochs: int,
         history: list[dict] | None = None, dev_root: Path | None = None) -> TrainResult:
    ckpt_dir = Path(cfg.checkpoint_dir)
    dev_root = root if dev_root is None else Path(dev_root)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    dataset = TrainingSet(train_records, root, cfg.segment_s, cfg.seed, cfg.task)

    history = list(history or [])
    best_dev = max((h["dev_sisnr"] for h in history), default=-np.inf)
    step_losses: list[float] = []
    stagnant = 0
    steps = 0
    stop = False

    best_path = ckpt_dir / BEST_NAME
    last_path = ckpt_dir / LAST_NAME

    for epoch in range(start_epoch, max_epochs):
        model.train()
        epoch_losses = []
        for batch in dataset.batches(epoch, cfg.batch_size):
            optimizer.zero_grad()
            loss = _compute_loss(model, batch, cfg.task)
            if not torch.isfinite(loss):
                diag = save_checkpoint(
                    _checkpoint_of(model, optimizer, cfg.task, epoch, best_dev, history),
                    ckpt_dir / DIVERGED_NAME,
                )
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} step {steps}", diag
                )
            loss.backward()
            if cfg.grad_clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
            optimizer.step()
            epoch_losses.append(float(loss.item()))
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                stop = True
                break
        step_losses.extend(epoch_losses)

        dev_sisnr = evaluate_dev(model, dev_records, dev_root, cfg.task)
        lr = optimizer.param_groups[0]["lr"]
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            "dev_sisnr": dev_sisnr,
            "lr": lr,
        }
        history.append(entry)
        logger.info("epoch %d: loss %.2f dev SISNR %.2f dB (lr %.2e)",
                    epoch, entry["train_loss"], dev_sisnr, lr)
        with (ckpt_dir / HISTORY_NAME).open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry) + "\n")

        save_checkpoint(
            _checkpoint_of(model, optimizer, cfg.task, epoch, best_dev, history), last_path
        )
        if dev_sisnr > best_dev:
            best_dev = dev_sisnr
            stagnant = 0
            save_checkpoint(
                _checkpoint_of(model, optimizer, cfg.task, epoch, best_dev, history),
                best_path,
            )
        else:
            stagnant += 1
            if stagnant == cfg.lr_halve_patience:
                for group in optimizer.param_groups:
                    group["lr"] *= 0.5
                logger.info("dev stagnant for %d epochs; lr halved to %.2e",
                            stagnant, optimizer.param_groups[0]["lr"])
            if stagnant >= cfg.early_stop_patience:
                logger.info("dev stagnant for %d epochs; stopping early", stagnant)
                break
        if stop:
            break

    if not best_path.exists():  # no epoch improved over resumed history
        save_checkpoint(
            _checkpoint_of(model, optimizer, cfg.task, max_epochs - 1, best_dev, history),
            best_path,
        )
    return TrainResult(best_path=best_path, last_path=last_path,
                       best_dev_sisnr=float(best_dev), history=history,
                       step_losses=step_losses)


def train(model_cfg: DpccnConfig, cfg: TrainConfig, train_records, dev_records,
          root, speaker_cfg: SpeakerEncoderConfig | None = None,
          dev_root=None) -> TrainResult:
    """Train from scratch; MVN statistics come from the training manifest."""
    torch.manual_seed(cfg.seed)
    if cfg.task == "tse":
        if model_cfg.num_sources != 1:
            raise ValueError("tse training requires a single-output model config")
        model = SDPCCN(model_cfg, speaker_cfg)
    else:
        model = DPCCN(model_cfg)
    stats = mvn_from_records(train_records, Path(root), model_cfg.stft)
    (model.dpccn if isinstance(model, SDPCCN) else model).set_mvn(stats)
    optimizer = _make_optimizer(model, cfg)
    return _fit(model, optimizer, cfg, train_records, dev_records, Path(root),
                start_epoch=0, max_epochs=cfg.epochs, dev_root=dev_root)


def resume(checkpoint_path, cfg: TrainConfig, train_records, dev_records, root,
           dev_root=None) -> TrainResult:
    """Continue an interrupted run: restores model, optimizer, and epoch."""
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt.task != cfg.task:
        raise ValueError(f"checkpoint task {ckpt.task!r} does not match config {cfg.task!r}")
    torch.manual_seed(cfg.seed)
    model = ckpt.build_model()
    optimizer = _make_optimizer(model, cfg)
    if ckpt.optimizer_state is not None:
        optimizer.load_state_dict(ckpt.optimizer_state)
    return _fit(model, optimizer, cfg, train_records, dev_records, Path(root),
                start_epoch=ckpt.epoch + 1, max_epochs=cfg.epochs,
                history=ckpt.history, dev_root=dev_root)


def finetune(checkpoint_path, cfg: TrainConfig, remix_records,
             source_records, dev_records, root, dev_root=None) -> TrainResult:
    """Mixture-Remix fine-tuning of a trained extraction model.

    Optimizes on the remix manifest alone, or on the union
    remix + source when ``source_records`` is given, with uniform
    shuffling over the concatenation. Capped at ``finetune_max_epochs``
    and the architecture is never altered.
    """
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt.task != "tse":
        raise ValueError("Mixture-Remix fine-tuning applies to tse checkpoints only")
    if cfg.task != "tse":
        raise ValueError("fine-tuning config must use task='tse'")
    if not remix_records:
        raise DataError("empty remix manifest")
    torch.manual_seed(cfg.seed)
    model = ckpt.build_model()  # keeps source-model MVN statistics
    optimizer = _make_optimizer(model, cfg)
    records = list(remix_records) + list(source_records or [])
    epochs = min(cfg.epochs, cfg.finetune_max_epochs)
    return _fit(model, optimizer, replace(cfg, epochs=epochs), records, dev_records,
                Path(root), start_epoch=0, max_epochs=epochs, dev_root=dev_root)
