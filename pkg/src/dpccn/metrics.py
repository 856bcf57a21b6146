"""SISNR, SISNRi, ST-Gap, and permutation-resolved separation scoring."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ZeroReferenceError

SISNR_EPS = 1e-8


def _as_signal(x) -> np.ndarray:
    samples = getattr(x, "samples", x)
    return np.asarray(samples, dtype=np.float64)


def sisnr(est, ref, eps: float = SISNR_EPS) -> float:
    """Scale-invariant signal-to-noise ratio in dB.

    Both signals are mean-removed, the estimate is projected onto the
    reference, and the ratio of projection energy to residual energy is
    returned in dB. ``eps`` bounds the ceiling (est == ref reports a
    large finite value) and the floor.
    """
    est = _as_signal(est)
    ref = _as_signal(ref)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: est {est.shape} vs ref {ref.shape}")
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ZeroReferenceError("reference has zero energy after mean removal")
    scale = float(np.dot(est, ref)) / ref_energy
    s_target = scale * ref
    e_noise = est - s_target
    ratio = float(np.dot(s_target, s_target)) / (float(np.dot(e_noise, e_noise)) + eps)
    return 10.0 * np.log10(ratio + eps)


def sisnri(est, ref, mix, eps: float = SISNR_EPS) -> float:
    """SISNR improvement of the estimate over the unprocessed mixture."""
    return sisnr(est, ref, eps) - sisnr(mix, ref, eps)


def st_gap(source_sisnr: float, target_sisnr: float) -> float:
    """Relative SISNR degradation from source to target domain.

    (source - target) / source, as a fraction (0.826 means an 82.6% drop).
    """
    if source_sisnr == 0.0:
        raise ValueError("source-domain SISNR must be nonzero")
    return (source_sisnr - target_sisnr) / source_sisnr


@dataclass
class UtteranceScore:
    utterance_id: str
    sisnr: float
    sisnri: float
    permutation: tuple[int, ...]
    per_source_sisnr: list[float]
    per_source_sisnri: list[float]

    def to_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "sisnr": self.sisnr,
            "sisnri": self.sisnri,
            "permutation": list(self.permutation),
            "per_source_sisnr": self.per_source_sisnr,
            "per_source_sisnri": self.per_source_sisnri,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UtteranceScore":
        return cls(
            utterance_id=d["utterance_id"],
            sisnr=d["sisnr"],
            sisnri=d["sisnri"],
            permutation=tuple(d["permutation"]),
            per_source_sisnr=list(d["per_source_sisnr"]),
            per_source_sisnri=list(d["per_source_sisnri"]),
        )


def score_separation(ests: Sequence, refs: Sequence, mix, utterance_id: str = "") -> UtteranceScore:
    """Score one utterance under the best estimate-to-reference pairing.

    All S! pairings are evaluated and the one maximizing mean SISNR is
    reported, mirroring the assignment used by permutation invariant
    training. S = 1 reduces to a plain SISNR of a target-extraction
    estimate.
    """
    if len(ests) != len(refs):
        raise ValueError(f"got {len(ests)} estimates for {len(refs)} references")
    n = len(ests)
    if n == 0:
        raise ValueError("no sources to score")
    best_perm = None
    best_values: list[float] | None = None
    best_mean = -np.inf
    for perm in permutations(range(n)):
        values = [sisnr(ests[i], refs[perm[i]]) for i in range(n)]
        mean = float(np.mean(values))
        if mean > best_mean:
            best_mean = mean
            best_perm = perm
            best_values = values
    assert best_perm is not None and best_values is not None
    baselines = [sisnr(mix, refs[best_perm[i]]) for i in range(n)]
    improvements = [v - b for v, b in zip(best_values, baselines)]
    return UtteranceScore(
        utterance_id=utterance_id,
        sisnr=best_mean,
        sisnri=float(np.mean(improvements)),
        permutation=best_perm,
        per_source_sisnr=best_values,
        per_source_sisnri=improvements,
    )


@dataclass
class ScoreReport:
    """Per-utterance scores plus their unweighted corpus means."""

    per_utterance: list[UtteranceScore] = field(default_factory=list)

    @property
    def mean_sisnr(self) -> float:
        return float(np.mean([u.sisnr for u in self.per_utterance]))

    @property
    def mean_sisnri(self) -> float:
        return float(np.mean([u.sisnri for u in self.per_utterance]))

    def sorted(self) -> "ScoreReport":
        return ScoreReport(sorted(self.per_utterance, key=lambda u: u.utterance_id))

    def write_jsonl(self, path) -> None:
        """One utterance per line, then a summary record."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for utt in self.per_utterance:
                f.write(json.dumps(utt.to_dict()) + "\n")
            summary = {
                "summary": True,
                "utterances": len(self.per_utterance),
                "mean_sisnr": self.mean_sisnr,
                "mean_sisnri": self.mean_sisnri,
            }
            f.write(json.dumps(summary) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "ScoreReport":
        report = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            d = json.loads(line)
            if d.get("summary"):
                continue
            report.per_utterance.append(UtteranceScore.from_dict(d))
        return report


def format_score_table(rows: dict[str, tuple[float, float]], gap: float | None = None) -> str:
    """Aligned SISNR / SISNRi table, one corpus per row."""
    width = max([len(name) for name in rows] + [6])
    lines = [f"{'corpus':<{width}}  SISNR / SISNRi"]
    for name, (snr, snri) in rows.items():
        lines.append(f"{name:<{width}}  {snr:5.2f} / {snri:5.2f}")
    if gap is not None:
        lines.append(f"ST-Gap: {100.0 * gap:.1f}%")
    return "\n".join(lines)
