"""Corpus evaluation and single-file inference."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .audio import read_wav, write_wav
from .checkpoint import load_checkpoint
from .data import data_root, load_record_audio
from .errors import DataError
from .metrics import ScoreReport, format_score_table, score_separation, st_gap
from .simulate import MixtureRecord, load_manifest
from .speaker import SDPCCN

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """Per-corpus score reports plus the source-to-target gap."""

    corpora: dict[str, ScoreReport] = field(default_factory=dict)
    source: str | None = None
    target: str | None = None

    @property
    def st_gap(self) -> float | None:
        if self.source is None or self.target is None:
            return None
        return st_gap(self.corpora[self.source].mean_sisnr,
                      self.corpora[self.target].mean_sisnr)

    def to_dict(self) -> dict:
        d = {
            "corpora": {
                name: {
                    "mean_sisnr": report.mean_sisnr,
                    "mean_sisnri": report.mean_sisnri,
                    "utterances": len(report.per_utterance),
                }
                for name, report in self.corpora.items()
            },
            "source": self.source,
            "target": self.target,
        }
        if self.st_gap is not None:
            d["st_gap"] = self.st_gap
        return d

    def format_table(self) -> str:
        rows = {name: (r.mean_sisnr, r.mean_sisnri) for name, r in self.corpora.items()}
        return format_score_table(rows, self.st_gap)

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _score_record(model, record: MixtureRecord, root: Path, task: str):
    audio = load_record_audio(record, root, need_enroll=task == "tse")
    if task == "tse":
        est = model.extract(audio["mix"], audio["enroll"])
        return score_separation([est], [audio["refs"][record.target_index]],
                                audio["mix"], record.id)
    return score_separation(model.separate(audio["mix"]), audio["refs"],
                            audio["mix"], record.id)


def evaluate_records(model, task: str, records: list[MixtureRecord],
                     root: Path) -> ScoreReport:
    """Score every record of one corpus; aggregation is id-sorted for
    a deterministic report regardless of processing order."""
    missing = [r.id for r in records if not r.source_paths]
    if missing:
        raise DataError(f"records without references: {missing}")
    report = ScoreReport()
    with torch.no_grad():
        for record in records:
            report.per_utterance.append(_score_record(model, record, root, task))
    return report.sorted()


def evaluate(checkpoint_path, manifests: dict[str, Path],
             source: str | None = None, target: str | None = None) -> EvalReport:
    """Evaluate a checkpoint on named corpora.

    ``manifests`` maps corpus names to manifest paths. When exactly one
    corpus is flagged ``source`` and one ``target``, the report carries
    their relative SISNR gap.
    """
    for name in (source, target):
        if name is not None and name not in manifests:
            raise ValueError(f"{name!r} is not one of the evaluated corpora")
    ckpt = load_checkpoint(checkpoint_path)
    model = ckpt.build_model()
    model.eval()
    report = EvalReport(source=source, target=target)
    for name, manifest_path in manifests.items():
        records = load_manifest(manifest_path)
        root = data_root(manifest_path)
        report.corpora[name] = evaluate_records(model, ckpt.task, records, root)
        logger.info("%s: SISNR %.2f / SISNRi %.2f over %d utterances",
                    name, report.corpora[name].mean_sisnr,
                    report.corpora[name].mean_sisnri, len(records))
    return report


def infer(checkpoint_path, mix_path, out_dir, enroll_path=None,
          reference_paths: list | None = None) -> dict:
    """Run one mixture through a checkpoint and write estimate WAVs.

    A JSON sidecar next to the outputs records the files written and,
    when references are supplied, the permutation-resolved SISNR of the
    estimates (matching corpus evaluation exactly).
    """
    ckpt = load_checkpoint(checkpoint_path)
    model = ckpt.build_model()
    model.eval()
    if ckpt.task == "tse" and enroll_path is None:
        raise ValueError("tse checkpoints require an enrollment utterance")

    mix = read_wav(mix_path)
    stem = Path(mix_path).stem
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if ckpt.task == "tse":
        estimates = [model.extract(mix, read_wav(enroll_path))]
        names = [f"{stem}_target.wav"]
    else:
        estimates = model.separate(mix)
        names = [f"{stem}_s{i + 1}.wav" for i in range(len(estimates))]
    for name, est in zip(names, estimates):
        write_wav(out_dir / name, est)

    sidecar: dict = {"mixture": str(mix_path), "outputs": names, "task": ckpt.task}
    if reference_paths:
        refs = [read_wav(p) for p in reference_paths]
        score = score_separation(estimates, refs, mix, stem)
        sidecar["sisnr"] = score.per_source_sisnr
        sidecar["sisnri"] = score.per_source_sisnri
        sidecar["permutation"] = list(score.permutation)
        sidecar["mean_sisnr"] = score.sisnr
    sidecar_path = out_dir / f"{stem}_infer.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return sidecar
