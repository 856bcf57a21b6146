"""Deterministic mixture simulation and Mixture-Remix data generation.

Three manifest modes:

* ``ss``    two-speaker mixtures with both references kept;
* ``tse``   the same mixtures with the first speaker as target plus a
            distinct enrollment utterance of that speaker;
* ``remix`` three-speaker fine-tuning data: a clean source-domain
            utterance laid over a target-domain unsupervised mixture
            scaled by ``alpha = sqrt(E_s / (10^(SNR/10) * E_m))``, with
            another utterance of the same source speaker as enrollment.

All randomness derives from ``(seed, record index)`` so generation is
reproducible and order-independent; audio is written as 32-bit float
WAV so emitted mixtures equal the sum of their stored sources
sample-exactly. Speech corpora are laid out as
``root/<speaker_id>/**/*.wav``; unsupervised mixtures as a flat
directory of WAV files.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, decimate, read_wav, write_wav
from .errors import DataError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


class SilentSignalError(ValueError):
    """A clamped segment carries no energy; its record is skipped."""


@dataclass(frozen=True)
class RecipeConfig:
    """Knobs of the simulation recipes."""

    sample_rate: int = 8000
    clamp_duration_s: float = 4.0
    pair_snr_range: tuple[float, float] = (0.0, 5.0)
    remix_snr_range: tuple[float, float] = (15.0, 20.0)
    seed: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.clamp_duration_s <= 0:
            raise ValueError("clamp_duration_s must be positive")
        for name, (lo, hi) in (("pair_snr_range", self.pair_snr_range),
                               ("remix_snr_range", self.remix_snr_range)):
            if not (lo <= hi):
                raise ValueError(f"{name} must be a nonempty closed interval, got [{lo}, {hi}]")


@dataclass
class MixtureRecord:
    """One manifest line; paths are relative to the manifest directory."""

    id: str
    mix_path: str
    source_paths: list[str]
    speaker_ids: list[str]
    target_index: int
    snr_db: float
    duration_s: float
    sample_rate: int
    enroll_path: str | None = None

    def __post_init__(self):
        if not 1 <= len(self.source_paths) <= 3:
            raise ValueError(f"{self.id}: records carry 1-3 sources")
        if len(set(self.speaker_ids)) != len(self.speaker_ids):
            raise ValueError(f"{self.id}: speaker ids must be pairwise distinct")
        if self.duration_s <= 0:
            raise ValueError(f"{self.id}: duration must be positive")
        if not 0 <= self.target_index < len(self.source_paths):
            raise ValueError(f"{self.id}: target_index out of range")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "mix_path": self.mix_path,
            "source_paths": self.source_paths,
            "speaker_ids": self.speaker_ids,
            "target_index": self.target_index,
            "snr_db": self.snr_db,
            "duration_s": self.duration_s,
            "sample_rate": self.sample_rate,
        }
        if self.enroll_path is not None:
            d["enroll_path"] = self.enroll_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureRecord":
        return cls(
            id=d["id"],
            mix_path=d["mix_path"],
            source_paths=list(d["source_paths"]),
            speaker_ids=list(d["speaker_ids"]),
            target_index=d["target_index"],
            snr_db=d["snr_db"],
            duration_s=d["duration_s"],
            sample_rate=d["sample_rate"],
            enroll_path=d.get("enroll_path"),
        )


@dataclass
class RemixSpec:
    """Energies and the scale relating a source utterance to an
    unsupervised mixture at a requested SNR."""

    source_energy: float
    mixture_energy: float
    snr_db: float
    alpha: float

    @classmethod
    def from_energies(cls, source_energy: float, mixture_energy: float,
                      snr_db: float) -> "RemixSpec":
        return cls(source_energy, mixture_energy, snr_db,
                   snr_scale_factor(source_energy, mixture_energy, snr_db))


def snr_scale_factor(source_energy: float, mixture_energy: float, snr_db: float) -> float:
    """Scale for the mixture so the source sits ``snr_db`` above it:
    alpha = sqrt(E_s / (10^(snr/10) * E_m))."""
    if source_energy <= 0 or mixture_energy <= 0:
        raise ValueError("energies must be positive")
    return math.sqrt(source_energy / (10.0 ** (snr_db / 10.0) * mixture_energy))


def clamp_utterance(wave: Waveform, duration_s: float,
                    rng: np.random.Generator) -> Waveform:
    """Random contiguous segment of exactly ``duration_s``; zero-padded
    at the end if the utterance is shorter."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * wave.sample_rate))
    samples = wave.samples
    if samples.size > n:
        offset = int(rng.integers(0, samples.size - n + 1))
        segment = samples[offset:offset + n]
    elif samples.size < n:
        segment = np.concatenate([samples, np.zeros(n - samples.size)])
    else:
        segment = samples.copy()
    return Waveform(segment, wave.sample_rate)


def mix_two_speakers(s1: Waveform, s2: Waveform,
                     snr_db: float) -> tuple[Waveform, Waveform, Waveform, float]:
    """Mix two equal-length sources at a relative SNR.

    The second source is scaled so 10*log10(E1/E2') = snr_db and the
    mixture is their sum. If the mixture peak exceeds 1, all three
    signals are scaled by the same factor so references stay aligned;
    the factor is returned (1.0 when no normalization was needed).
    """
    if len(s1) != len(s2):
        raise ValueError(f"length mismatch: {len(s1)} vs {len(s2)}")
    e1 = s1.energy()
    e2 = s2.energy()
    if e1 == 0.0 or e2 == 0.0:
        raise SilentSignalError("cannot mix a silent source")
    scale = math.sqrt(e1 / (10.0 ** (snr_db / 10.0) * e2))
    x1 = s1.samples
    x2 = scale * s2.samples
    mixture = x1 + x2
    peak = float(np.max(np.abs(mixture)))
    norm = 1.0 / peak if peak > 1.0 else 1.0
    if norm != 1.0:
        logger.info("mixture peak %.3f exceeds 1; jointly scaled by %.4f", peak, norm)
    rate = s1.sample_rate
    return (Waveform(norm * mixture, rate), Waveform(norm * x1, rate),
            Waveform(norm * x2, rate), norm)


def mixture_remix(unsup_mix: Waveform, source_utt: Waveform,
                  snr_db: float) -> tuple[Waveform, RemixSpec]:
    """Overlay a clean source on an unsupervised mixture at ``snr_db``.

    Returns the emitted three-speaker mixture (source + alpha * mixture,
    sample-exact, no renormalization) and the scale bookkeeping. The
    source utterance itself is the extraction reference.
    """
    if len(unsup_mix) != len(source_utt):
        raise ValueError(f"length mismatch: {len(unsup_mix)} vs {len(source_utt)}")
    e_s = source_utt.energy()
    e_m = unsup_mix.energy()
    if e_s == 0.0:
        raise SilentSignalError("silent source utterance")
    if e_m == 0.0:
        raise SilentSignalError("silent unsupervised mixture")
    spec = RemixSpec.from_energies(e_s, e_m, snr_db)
    emitted = Waveform(source_utt.samples + spec.alpha * unsup_mix.samples,
                       source_utt.sample_rate)
    return emitted, spec


# -- corpus scanning ---------------------------------------------------------

def scan_speakers(root) -> dict[str, list[Path]]:
    """Speaker-to-utterance index: first-level directories are speakers."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"speech corpus directory not found: {root}")
    speakers: dict[str, list[Path]] = {}
    for spk_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(spk_dir.rglob("*.wav"))
        if wavs:
            speakers[spk_dir.name] = wavs
    if not speakers:
        raise DataError(f"no speaker subdirectories with WAV files under {root}")
    return speakers


def scan_wavs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"mixture directory not found: {root}")
    wavs = sorted(root.rglob("*.wav"))
    if not wavs:
        raise DataError(f"no WAV files under {root}")
    return wavs


def _load_at_rate(path: Path, rate: int) -> Waveform:
    wave = read_wav(path)
    if wave.sample_rate != rate:
        wave = decimate(wave, rate)
    return wave


# -- manifest I/O ------------------------------------------------------------

def write_manifest(records: list[MixtureRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict()) + "\n")


def load_manifest(path) -> list[MixtureRecord]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(MixtureRecord.from_dict(json.loads(line)))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
    if not records:
        raise DataError(f"manifest is empty: {path}")
    return records


# -- manifest builders -------------------------------------------------------

def build_manifest(mode: str, out_dir, recipe: RecipeConfig,
                   speech_root=None, mixture_root=None,
                   num_mixtures: int | None = None) -> Path:
    """Generate audio plus a JSON-lines manifest under ``out_dir``.

    ``speech_root`` supplies speaker-organized clean speech (all
    modes); ``mixture_root`` supplies unsupervised mixtures (remix
    mode, one record per mixture by default).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if mode in ("ss", "tse"):
        if speech_root is None:
            raise DataError(f"{mode} mode needs a speech corpus")
        if num_mixtures is None:
            raise ValueError(f"{mode} mode needs an explicit mixture count")
        records = _build_pair_records(mode, out_dir, recipe,
                                      scan_speakers(speech_root), num_mixtures)
    elif mode == "remix":
        if speech_root is None or mixture_root is None:
            raise DataError("remix mode needs both a speech corpus and a mixture directory")
        records = _build_remix_records(out_dir, recipe, scan_speakers(speech_root),
                                       scan_wavs(mixture_root), num_mixtures)
    else:
        raise ValueError(f"unknown mode {mode!r}; use ss, tse, or remix")

    manifest = out_dir / MANIFEST_NAME
    write_manifest(records, manifest)
    logger.info("wrote %d %s records to %s", len(records), mode, manifest)
    return manifest


def _pick_two_speakers(speakers: dict[str, list[Path]], rng, need_enroll: bool):
    """Choose a distinct speaker pair; the first must allow a distinct
    enrollment utterance when requested."""
    names = sorted(speakers)
    if len(names) < 2:
        raise DataError("need at least 2 speakers for two-speaker mixtures")
    for _ in range(64):
        a, b = rng.choice(len(names), size=2, replace=False)
        first, second = names[a], names[b]
        if need_enroll and len(speakers[first]) < 2:
            continue  # resample another speaker pair
        return first, second
    raise DataError("no speaker with >= 2 utterances available for enrollment")


def _build_pair_records(mode: str, out_dir: Path, recipe: RecipeConfig,
                        speakers: dict[str, list[Path]], count: int) -> list[MixtureRecord]:
    records = []
    rate = recipe.sample_rate
    for index in range(count):
        rng = np.random.default_rng([recipe.seed, index])
        spk1, spk2 = _pick_two_speakers(speakers, rng, need_enroll=(mode == "tse"))
        utts1, utts2 = speakers[spk1], speakers[spk2]
        i1 = int(rng.integers(len(utts1)))
        i2 = int(rng.integers(len(utts2)))
        s1 = clamp_utterance(_load_at_rate(utts1[i1], rate), recipe.clamp_duration_s, rng)
        s2 = clamp_utterance(_load_at_rate(utts2[i2], rate), recipe.clamp_duration_s, rng)
        snr = float(rng.uniform(*recipe.pair_snr_range))
        try:
            mix, ref1, ref2, _ = mix_two_speakers(s1, s2, snr)
        except SilentSignalError as exc:
            logger.warning("skipping record %d: %s", index, exc)
            continue

        rec_id = f"{mode}_{index:06d}"
        mix_rel = f"mix/{rec_id}.wav"
        s1_rel = f"s1/{rec_id}.wav"
        s2_rel = f"s2/{rec_id}.wav"
        write_wav(out_dir / mix_rel, mix)
        write_wav(out_dir / s1_rel, ref1)
        write_wav(out_dir / s2_rel, ref2)

        enroll_rel = None
        if mode == "tse":
            choices = [k for k in range(len(utts1)) if k != i1]
            enroll_idx = int(choices[rng.integers(len(choices))])
            enroll_rel = f"enroll/{rec_id}.wav"
            write_wav(out_dir / enroll_rel, _load_at_rate(utts1[enroll_idx], rate))

        records.append(MixtureRecord(
            id=rec_id,
            mix_path=mix_rel,
            source_paths=[s1_rel, s2_rel],
            speaker_ids=[spk1, spk2],
            target_index=0,
            snr_db=snr,
            duration_s=recipe.clamp_duration_s,
            sample_rate=rate,
            enroll_path=enroll_rel,
        ))
    if not records:
        raise DataError("all records were rejected; corpus may be silent")
    return records


def _build_remix_records(out_dir: Path, recipe: RecipeConfig,
                         speakers: dict[str, list[Path]], mixtures: list[Path],
                         num_mixtures: int | None) -> list[MixtureRecord]:
    eligible = sorted(name for name, utts in speakers.items() if len(utts) >= 2)
    if not eligible:
        raise DataError("remix mode needs a source speaker with >= 2 utterances")
    if num_mixtures is not None:
        mixtures = mixtures[:num_mixtures]
    rate = recipe.sample_rate
    records = []
    for index, mix_path in enumerate(mixtures):
        rng = np.random.default_rng([recipe.seed, index])
        unsup = clamp_utterance(_load_at_rate(mix_path, rate), recipe.clamp_duration_s, rng)
        spk = eligible[int(rng.integers(len(eligible)))]
        utts = speakers[spk]
        i_src, i_enr = (int(v) for v in rng.choice(len(utts), size=2, replace=False))
        if utts[i_src] == utts[i_enr]:
            raise ValueError("enrollment must differ from the in-mixture utterance")
        source = clamp_utterance(_load_at_rate(utts[i_src], rate),
                                 recipe.clamp_duration_s, rng)
        snr = float(rng.uniform(*recipe.remix_snr_range))
        try:
            emitted, _ = mixture_remix(unsup, source, snr)
        except SilentSignalError as exc:
            logger.warning("skipping remix record %d (%s): %s", index, mix_path.name, exc)
            continue

        rec_id = f"remix_{index:06d}"
        mix_rel = f"mix/{rec_id}.wav"
        ref_rel = f"ref/{rec_id}.wav"
        enroll_rel = f"enroll/{rec_id}.wav"
        write_wav(out_dir / mix_rel, emitted)
        write_wav(out_dir / ref_rel, source)
        write_wav(out_dir / enroll_rel, _load_at_rate(utts[i_enr], rate))

        records.append(MixtureRecord(
            id=rec_id,
            mix_path=mix_rel,
            source_paths=[ref_rel],
            speaker_ids=[spk],
            target_index=0,
            snr_db=snr,
            duration_s=recipe.clamp_duration_s,
            sample_rate=rate,
            enroll_path=enroll_rel,
        ))
    if not records:
        raise DataError("all remix records were rejected")
    return records
