"""Negative-SISNR training losses with utterance-level PIT for separation."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import torch

from .errors import ZeroReferenceError

LOSS_EPS = 1e-8


def _sisnr_db(est: torch.Tensor, ref: torch.Tensor, eps: float = LOSS_EPS) -> torch.Tensor:
    """Batched SISNR in dB over the last axis; differentiable w.r.t. est."""
    est = est - est.mean(dim=-1, keepdim=True)
    ref = ref - ref.mean(dim=-1, keepdim=True)
    ref_energy = (ref ** 2).sum(dim=-1, keepdim=True)
    scale = (est * ref).sum(dim=-1, keepdim=True) / (ref_energy + eps)
    s_target = scale * ref
    e_noise = est - s_target
    ratio = (s_target ** 2).sum(dim=-1) / ((e_noise ** 2).sum(dim=-1) + eps)
    return 10.0 * torch.log10(ratio + eps)


def _check_refs(ref: torch.Tensor) -> None:
    centered = ref - ref.mean(dim=-1, keepdim=True)
    if bool(((centered ** 2).sum(dim=-1) == 0).any()):
        raise ZeroReferenceError("training reference has zero energy (data bug)")


def neg_sisnr(est: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    """Negative SISNR, mean over any leading batch dimensions."""
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: est {tuple(est.shape)} vs ref {tuple(ref.shape)}")
    _check_refs(ref)
    return -_sisnr_db(est, ref).mean()


@dataclass
class LossValue:
    """Scalar training loss plus the per-utterance pairing it was computed under."""

    loss: torch.Tensor
    permutations: list[tuple[int, ...]]


def upit_loss(ests: torch.Tensor, refs: torch.Tensor) -> LossValue:
    """Utterance-level permutation invariant negative SISNR.

    ``ests`` and ``refs`` are (B, S, T). For each utterance the mean
    per-source negative SISNR is minimized over all S! pairings; the
    batch loss is the mean of the per-utterance minima.
    """
    if ests.shape != refs.shape:
        raise ValueError(
            f"shape mismatch: ests {tuple(ests.shape)} vs refs {tuple(refs.shape)}"
        )
    if ests.dim() != 3:
        raise ValueError(f"expected (batch, sources, time), got {tuple(ests.shape)}")
    n_src = ests.shape[1]
    if n_src > 4:
        raise ValueError(f"exhaustive PIT supports at most 4 sources, got {n_src}")
    _check_refs(refs)

    # pairwise[b, i, j] = sisnr(est_i, ref_j)
    pairwise = _sisnr_db(ests.unsqueeze(2), refs.unsqueeze(1))
    perms = list(permutations(range(n_src)))
    per_perm = torch.stack(
        [pairwise[:, range(n_src), perm].mean(dim=-1) for perm in perms], dim=1
    )  # (B, S!)
    best_sisnr, best_idx = per_perm.max(dim=1)
    chosen = [perms[i] for i in best_idx.tolist()]
    return LossValue(loss=-best_sisnr.mean(), permutations=chosen)


def tse_loss(est: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    """Extraction loss: plain negative SISNR against the target reference."""
    return neg_sisnr(est, ref)
