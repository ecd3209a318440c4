"""Differentiable loss kernels with analytic gradients.

Cross-entropy and soft Dice over full volumes, plus the topology-constrained
penalty: cross-entropy restricted to the key-voxel mask N of the predicted
segmentation. The total training loss is

    total = ce + dice + weight * tp

with the topology weight defaulting to 1e-6. Gradients are returned with
respect to the likelihood map; ``score_gradient`` pushes them through the
per-voxel normalization for trainers that splice in at pre-normalization
scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .constraints import ConstraintSpec, key_voxels
from .volume import BinaryMask, KeyVoxelMask, LabelVolume, ProbVolume, argmax_labels

# Likelihoods are clamped to [CLAMP_EPS, 1] before any log.
CLAMP_EPS = 1e-7
DICE_SMOOTH = 1e-5
DEFAULT_TP_WEIGHT = 1e-6

GradVolume = np.ndarray  # float64, same (C, D, H, W) shape as the likelihood map

TpNorm = Literal["keyvox", "allvox"]
MaskFrom = Literal["prediction", "ground_truth"]


@dataclass(frozen=True)
class LossBreakdown:
    l_ce: float
    l_dice: float
    l_tp: float
    tp_weight: float
    l_total: float
    key_voxel_count: int

    def as_dict(self) -> dict:
        return {
            "l_ce": self.l_ce,
            "l_dice": self.l_dice,
            "l_tp": self.l_tp,
            "lambda": self.tp_weight,
            "l_total": self.l_total,
            "key_voxel_count": self.key_voxel_count,
        }


def _check_pair(p: ProbVolume, g: LabelVolume) -> None:
    if p.dims != g.dims:
        raise ValueError(f"likelihood dims {tuple(p.dims)} != label dims {tuple(g.dims)}")
    if int(g.data.max()) >= p.channels:
        raise ValueError(
            f"label {int(g.data.max())} exceeds the {p.channels}-channel likelihood map"
        )


def _check_mask(p: ProbVolume, mask: BinaryMask) -> None:
    if mask.dims != p.dims:
        raise ValueError(f"mask dims {tuple(mask.dims)} != volume dims {tuple(p.dims)}")


def _masked_ce(
    p: ProbVolume, g: LabelVolume, include: np.ndarray | None, denom: int
) -> tuple[float, GradVolume]:
    """Cross-entropy summed over ``include`` voxels, divided by ``denom``."""
    grad = np.zeros(p.data.shape, dtype=np.float64)
    if denom == 0:
        return 0.0, grad
    p_true = np.take_along_axis(p.data, g.data[None].astype(np.intp), axis=0)[0]
    p_true = p_true.astype(np.float64)
    clamped = np.clip(p_true, CLAMP_EPS, 1.0)
    if include is None:
        loss = float(-np.log(clamped).sum() / denom)
        gvals = np.where(p_true >= CLAMP_EPS, -1.0 / (denom * clamped), 0.0)
    else:
        loss = float(-np.log(clamped[include]).sum() / denom)
        gvals = np.where(
            include & (p_true >= CLAMP_EPS), -1.0 / (denom * clamped), 0.0
        )
    np.put_along_axis(grad, g.data[None].astype(np.intp), gvals[None], axis=0)
    return loss, grad


def ce_loss(
    p: ProbVolume, g: LabelVolume, mask: BinaryMask | None = None
) -> tuple[float, GradVolume]:
    """Mean cross-entropy of the true-class likelihoods, optionally masked.

    The mean runs over included voxels only; an empty inclusion set yields
    (0, zero gradient). The gradient is -1/(M * p) at each included voxel's
    true channel and zero elsewhere.
    """
    _check_pair(p, g)
    if mask is None:
        return _masked_ce(p, g, None, g.dims.voxels)
    _check_mask(p, mask)
    return _masked_ce(p, g, mask.data, mask.count)


def dice_loss(
    p: ProbVolume, g: LabelVolume, foreground_only: bool = False
) -> tuple[float, GradVolume]:
    """Soft Dice loss averaged over classes, with analytic gradient.

    Per class c, overlap = (2 * sum(p_c * [g==c]) + s) / (sum(p_c) + |g==c| + s),
    s = 1e-5; the loss is one minus the mean overlap. Background joins the
    average unless ``foreground_only`` is set.
    """
    _check_pair(p, g)
    channels = p.channels
    first = 1 if foreground_only else 0
    if first >= channels:
        raise ValueError("foreground_only requires at least two channels")
    pdat = p.data.astype(np.float64)
    gcounts = np.bincount(g.data.ravel(), minlength=channels).astype(np.float64)
    grad = np.zeros(pdat.shape, dtype=np.float64)
    nclasses = channels - first
    mean_overlap = 0.0
    for c in range(first, channels):
        y = g.data == c
        inter = float(pdat[c][y].sum())
        denom = float(pdat[c].sum()) + gcounts[c] + DICE_SMOOTH
        overlap = (2.0 * inter + DICE_SMOOTH) / denom
        mean_overlap += overlap / nclasses
        grad[c] = -(2.0 * y - overlap) / (denom * nclasses)
    return 1.0 - mean_overlap, grad


def tp_loss(
    p: ProbVolume,
    g: LabelVolume,
    spec: ConstraintSpec,
    norm: TpNorm = "keyvox",
    mask_from: MaskFrom = "prediction",
    mask: BinaryMask | None = None,
) -> tuple[float, GradVolume, KeyVoxelMask]:
    """Topology penalty: cross-entropy restricted to the key-voxel mask N.

    N is derived from the argmax of the likelihood map (or from the ground
    truth when ``mask_from="ground_truth"``) and treated as a constant: no
    derivative flows through mask construction. Pass ``mask`` to reuse a
    precomputed N. ``norm="keyvox"`` averages over N; ``norm="allvox"``
    divides the same sum by the total voxel count instead.
    """
    _check_pair(p, g)
    if mask is None:
        source = argmax_labels(p) if mask_from == "prediction" else g
        mask = key_voxels(source, spec)
    else:
        _check_mask(p, mask)
    if norm == "keyvox":
        denom = mask.count
    elif norm == "allvox":
        denom = g.dims.voxels
    else:
        raise ValueError(f"norm must be 'keyvox' or 'allvox', got {norm!r}")
    if mask.count == 0:
        return 0.0, np.zeros(p.data.shape, dtype=np.float64), mask
    loss, grad = _masked_ce(p, g, mask.data, denom)
    return loss, grad, mask


def total_loss(
    p: ProbVolume,
    g: LabelVolume,
    spec: ConstraintSpec,
    tp_weight: float = DEFAULT_TP_WEIGHT,
    norm: TpNorm = "keyvox",
    mask_from: MaskFrom = "prediction",
    mask: BinaryMask | None = None,
    dice_foreground_only: bool = False,
) -> tuple[LossBreakdown, GradVolume]:
    """Combined loss: cross-entropy + soft Dice + weighted topology penalty."""
    if not tp_weight >= 0.0:
        raise ValueError(f"topology weight must be >= 0, got {tp_weight}")
    l_ce, g_ce = ce_loss(p, g)
    l_dice, g_dice = dice_loss(p, g, foreground_only=dice_foreground_only)
    l_tp, g_tp, key_mask = tp_loss(p, g, spec, norm=norm, mask_from=mask_from, mask=mask)
    breakdown = LossBreakdown(
        l_ce=l_ce,
        l_dice=l_dice,
        l_tp=l_tp,
        tp_weight=tp_weight,
        l_total=l_ce + l_dice + tp_weight * l_tp,
        key_voxel_count=key_mask.count,
    )
    return breakdown, g_ce + g_dice + tp_weight * g_tp


def score_gradient(p_grad: GradVolume, p: ProbVolume) -> GradVolume:
    """Push a likelihood-space gradient through per-voxel normalization.

    For p = softmax(scores), out_c = p_c * (in_c - sum_k in_k * p_k).
    """
    grad = np.asarray(p_grad, dtype=np.float64)
    if grad.shape != p.data.shape:
        raise ValueError(f"gradient shape {grad.shape} != likelihood shape {p.data.shape}")
    pdat = p.data.astype(np.float64)
    dot = (grad * pdat).sum(axis=0, keepdims=True)
    return pdat * (grad - dot)
