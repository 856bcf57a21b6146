"""Manifest-backed example loading and deterministic batching.

Training examples are re-clamped to the configured segment length with
an offset drawn from ``(seed, epoch, index)``, so every epoch sees a
fresh but reproducible crop and resumed runs replay the exact same
batches. Shuffling likewise depends only on ``(seed, epoch)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import read_wav
from .dsp import MvnAccumulator, MvnStats, StftConfig, stft
from .errors import DataError
from .simulate import MixtureRecord, clamp_utterance

DATA_ROOT_ENV = "DPCCN_DATA_ROOT"


def data_root(manifest_path) -> Path:
    """Directory record paths are resolved against: the manifest's own
    directory unless DPCCN_DATA_ROOT overrides it."""
    env = os.environ.get(DATA_ROOT_ENV)
    return Path(env) if env else Path(manifest_path).parent


def resolve(path: str, root: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else root / p


def load_record_audio(record: MixtureRecord, root: Path,
                      need_enroll: bool = False) -> dict:
    """Load mixture, references, and (optionally) enrollment for one record."""
    missing = [p for p in [record.mix_path, *record.source_paths]
               if not resolve(p, root).is_file()]
    if need_enroll:
        if record.enroll_path is None:
            raise DataError(f"{record.id}: record has no enrollment path")
        if not resolve(record.enroll_path, root).is_file():
            missing.append(record.enroll_path)
    if missing:
        raise DataError(f"{record.id}: missing audio files: {missing}")
    out = {
        "mix": read_wav(resolve(record.mix_path, root)),
        "refs": [read_wav(resolve(p, root)) for p in record.source_paths],
    }
    if need_enroll:
        out["enroll"] = read_wav(resolve(record.enroll_path, root))
    return out


@dataclass
class Batch:
    mix: torch.Tensor            # (B, L)
    refs: torch.Tensor           # (B, S, L)
    enroll: torch.Tensor | None  # (B, L) for TSE


class TrainingSet:
    """Deterministic segment sampler over manifest records."""

    def __init__(self, records: list[MixtureRecord], root: Path, segment_s: float,
                 seed: int, task: str = "ss"):
        if not records:
            raise DataError("empty training manifest")
        if task not in ("ss", "tse"):
            raise ValueError(f"unknown task {task!r}")
        self.records = records
        self.root = Path(root)
        self.segment_s = segment_s
        self.seed = seed
        self.task = task

    def __len__(self) -> int:
        return len(self.records)

    def example(self, index: int, epoch: int) -> dict[str, np.ndarray]:
        """Segment-clamped tensors for one record; reproducible per
        (seed, epoch, index), with the same crop applied to the mixture
        and all of its references."""
        record = self.records[index]
        audio = load_record_audio(record, self.root, need_enroll=self.task == "tse")
        rng = np.random.default_rng([self.seed, epoch, index])
        n = int(round(self.segment_s * record.sample_rate))
        mix = audio["mix"].samples
        refs = [r.samples for r in audio["refs"]]
        if any(r.size != mix.size for r in refs):
            raise DataError(f"{record.id}: mixture/reference length mismatch")
        if mix.size > n:
            offset = int(rng.integers(0, mix.size - n + 1))
            mix = mix[offset:offset + n]
            refs = [r[offset:offset + n] for r in refs]
        elif mix.size < n:
            pad = n - mix.size
            mix = np.concatenate([mix, np.zeros(pad)])
            refs = [np.concatenate([r, np.zeros(pad)]) for r in refs]
        out = {"mix": mix, "refs": np.stack(refs)}
        if self.task == "tse":
            enroll = clamp_utterance(audio["enroll"], self.segment_s, rng)
            out["enroll"] = enroll.samples
            out["refs"] = out["refs"][record.target_index:record.target_index + 1]
        return out

    def batches(self, epoch: int, batch_size: int, shuffle: bool = True):
        """Yield stacked float32 batches in a (seed, epoch)-deterministic order."""
        order = np.arange(len(self.records))
        if shuffle:
            np.random.default_rng([self.seed, epoch, 0x0BDE]).shuffle(order)
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            examples = [self.example(int(i), epoch) for i in chunk]
            mix = torch.tensor(np.stack([e["mix"] for e in examples]), dtype=torch.float32)
            refs = torch.tensor(np.stack([e["refs"] for e in examples]), dtype=torch.float32)
            enroll = None
            if self.task == "tse":
                enroll = torch.tensor(np.stack([e["enroll"] for e in examples]),
                                      dtype=torch.float32)
            yield Batch(mix=mix, refs=refs, enroll=enroll)


def mvn_from_records(records: list[MixtureRecord], root: Path,
                     stft_cfg: StftConfig) -> MvnStats:
    """Streamed MVN statistics over the mixture spectrograms of a manifest."""
    acc = MvnAccumulator((2, stft_cfg.bins))
    for record in records:
        wave = read_wav(resolve(record.mix_path, Path(root)))
        acc.add_spectrogram(stft(wave, stft_cfg))
    return acc.finalize()
